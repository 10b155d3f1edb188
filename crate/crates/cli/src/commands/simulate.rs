use rnnlab::statespace::{constant_inputs, simulate, DynamicalModel};

use super::{constant_input, initial_state, scaled, SimulateArgs};
use crate::config::{CliResult, Context};

pub fn run_simulate(ctx: &Context, a: &SimulateArgs) -> CliResult<()> {
    let (cell, x0) = a.source().load(ctx.seed)?;
    let cell = match a.scale {
        Some(s) => scaled(&cell, s)?,
        None => cell,
    };
    let x0 = initial_state(a.x0.as_deref(), x0)?;
    let u = constant_input(a.input.as_deref(), cell.input_dim())?;
    let tr = simulate(&cell, &x0, &constant_inputs(&u, a.steps.unwrap_or(200)))?;
    ctx.write_csv("trajectory.csv", &tr.to_csv())?;
    Ok(())
}
