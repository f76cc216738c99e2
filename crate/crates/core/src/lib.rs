pub mod timeseries;
pub mod neuralnet;
pub mod metaheuristics;
pub mod tuning;
pub mod evaluation;
pub mod cli;
