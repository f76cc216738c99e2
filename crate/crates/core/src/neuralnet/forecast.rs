use super::{NetError, Network, Result, Tensor};
use crate::timeseries::ScalingParams;

/// Recursive multi-step forecast of a univariate series.
///
/// `history` is a `(time, 1)` tensor in scaled units. Each step feeds the
/// last `lookback` values (observed, then predicted) through the network,
/// takes the first output and appends it to the window. Returned values are
/// inverse-scaled with `scaling`.
pub fn iterative_forecast(
    net: &Network,
    history: &Tensor,
    steps: usize,
    scaling: &ScalingParams,
) -> Result<Vec<f64>> {
    iterative_forecast_scaled(net, history, steps)
        .map(|scaled| scaled.iter().map(|&s| scaling.inverse_value(s)).collect())
}

/// [`iterative_forecast`] without the final inverse scaling.
pub fn iterative_forecast_scaled(net: &Network, history: &Tensor, steps: usize) -> Result<Vec<f64>> {
    let lookback = net.config.lookback;
    if steps == 0 {
        return Err(NetError::Config("forecast steps must be at least 1".into()));
    }
    if net.config.n_features != 1 || history.cols() != 1 {
        return Err(NetError::Shape(
            "recursive forecasting needs a single-feature network and history".into(),
        ));
    }
    if history.rows() < lookback {
        return Err(NetError::Shape(format!(
            "history of {} rows is shorter than lookback {}",
            history.rows(),
            lookback
        )));
    }
    let mut window: Vec<f64> = history.data()[history.rows() - lookback..].to_vec();
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        let next = net.forward(&Tensor::column(&window)?)?[0];
        out.push(next);
        window.remove(0);
        window.push(next);
    }
    Ok(out)
}
