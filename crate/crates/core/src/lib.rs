//! Model-agnostic late fusion for heterogeneous multi-agent 3D object detection.
//!
//! Each agent maps its raw detector confidences through an independently fitted
//! calibrator (Doubly Bounded Scaling, Platt or Temperature scaling). The ego
//! vehicle then gathers the calibrated boxes from every agent and aggregates
//! them with Promote-Suppress Aggregation, or with NMS / Soft-NMS baselines.
//!
//! Modules:
//!
//! - [`geometry`]: oriented boxes, convex clipping, BEV and 3D IoU
//! - [`calibration`]: scaling calibrators, BCE fitting, reliability metrics
//! - [`aggregation`]: bounding-box graph, PSA, NMS, Soft-NMS
//! - [`fusion`]: ego-frame transforms and the calibrate-then-aggregate pipeline
//! - [`simulation`]: seeded synthetic scenes with heterogeneous detectors
//! - [`evaluation`]: greedy matching, AP, ablation reports
//! - [`exchange`]: the line-delimited detection exchange format
//!
//! With the default `parallel` feature the data-parallel inner loops (IoU
//! matrices, per-component PSA, per-frame simulation and evaluation, gradient
//! accumulation) run on rayon. Without it they run sequentially and produce
//! bit-identical results.

pub mod aggregation;
pub mod calibration;
pub mod evaluation;
pub mod exchange;
pub mod fusion;
pub mod geometry;
pub mod numfmt;
pub mod par;
pub mod simulation;

pub use aggregation::{CandidateSet, PsaParams};
pub use calibration::{CalibrationSample, Calibrator, CalibratorKind};
pub use fusion::{AgentDetections, AgentId, FusionConfig, Pose2D};
pub use geometry::{Box3D, FrameId, IouVariant};
