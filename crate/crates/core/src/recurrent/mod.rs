//! Recurrent cells, k-stacked networks with a dense head, backpropagation
//! through time, Monte Carlo dropout and recursive multi-step forecasting.

pub mod cell;
pub mod forecast;
pub mod stack;

pub use cell::{gru_cell_forward, lstm_cell_forward, rnn_cell_forward, CellKind, CellParams, GateParams};
pub use forecast::{mc_dropout_predict, mc_recursive_forecast, recursive_forecast, train, McForecast};
pub use stack::{bptt_gradients, RecurrentEncoder, StackConfig, StackedRecurrentNet};
