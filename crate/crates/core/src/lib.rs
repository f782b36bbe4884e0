//! Research engine for fundamentals-driven ETF selection.
//!
//! The pipeline, end to end:
//!
//! 1. [`store`] — point-in-time quarterly statements, daily prices, and ETF
//!    holdings snapshots, with availability-aware queries.
//! 2. [`features`] — 8×f percent-change windows over consecutive statements,
//!    plus cross-sectionally neutralized up/down labels.
//! 3. [`net`] — a five-layer feed-forward classifier (batch norm + ReLU,
//!    softmax head) with hand-derived backprop and Adam, trained with
//!    periodic validation checkpointing.
//! 4. [`scoring`] — stock scores are up-probabilities; ETF scores aggregate
//!    component scores through holdings weights.
//! 5. [`backtest`] — quarterly-rebalanced top-K portfolios, buy-and-hold
//!    within each quarter, with annualized metrics and report files.
//!
//! [`calendar`] supplies the business-day arithmetic used throughout, and
//! [`synthetic`] generates the deterministic end-to-end fixture behind the
//! `selftest` command.

pub mod backtest;
pub mod calendar;
pub mod features;
pub mod net;
pub mod scoring;
pub mod store;
pub mod synthetic;
