//! Tall-and-skinny matrix multiplication with pre-packed operands.
//!
//! `C = alpha * A * B + beta * C` where A is `m x k`, B is `k x n` and n is
//! small. Work is split into three stages:
//!
//! 1. install time: [`install_kernel`] times the register-tiled kernels and
//!    records the fastest for the machine;
//! 2. plan time: [`tune`] (or [`default_plan`]) picks cache blocking and a
//!    thread partition for a problem shape;
//! 3. run time: [`pack_a`] / [`pack_b`] copy the operands once into
//!    kernel-ordered buffers, and [`compute`] multiplies them as often as
//!    needed.
//!
//! ```
//! use tsmm::*;
//!
//! let p = Problem::new(64, 4, 32, 1.0f64, 0.0).unwrap();
//! let a = Matrix::from_fn(64, 32, StorageOrder::RowMajor, |i, j| (i + j) as f64);
//! let b = Matrix::from_fn(32, 4, StorageOrder::ColMajor, |i, j| (i * j) as f64);
//! let mut c = Matrix::filled(64, 4, StorageOrder::RowMajor, 0.0);
//!
//! let hw = HardwareProfile::fallback();
//! let kernel = KernelSelection::fixed(reference_kernel(KernelShape::new(4, 4, 1).unwrap()), &hw);
//! let plan = default_plan(&p, &hw, &kernel).unwrap();
//! let pa = pack_a(p.alpha, &a.view(), &plan).unwrap();
//! let pb = pack_b(1.0, &b.view(), &plan).unwrap();
//! compute(p.beta, &mut c.view_mut(), &pa, &pb, &plan).unwrap();
//!
//! let mut want = Matrix::filled(64, 4, StorageOrder::RowMajor, 0.0);
//! naive_gemm(&p, &a.view(), &b.view(), &mut want.view_mut()).unwrap();
//! assert_eq!(c, want);
//! ```

pub mod cache_model;
pub mod compute;
pub mod element;
pub mod error;
pub mod hardware;
pub mod kernel;
pub mod model;
pub mod packing;
pub mod planner;
pub mod timing;

pub use compute::{compute, naive_gemm, schedule, ComputeStats, ComputeTask};
pub use element::Element;
pub use error::{Result, TsmmError};
pub use hardware::{load_hardware_profile, HardwareProfile, ProfileSource};
pub use kernel::{
    install_kernel, reference_kernel, select_kernel, tile_flop_to_load_ratio, KernelCache,
    KernelCatalog, KernelSelection, KernelShape, KernelTimer, Microkernel, WallClockTimer,
};
pub use model::{validate_problem, Matrix, MatrixView, MatrixViewMut, Operand, Precision, Problem, StorageOrder};
pub use packing::{pack_a, pack_b, unpack_check, PackGeometry, PackedBuffer, Side};
pub use planner::{
    default_plan, design_blocking, design_candidates, gflops, gflops_for, optimize_threads, tune,
    tune_cached, BlockingParams, ExecutionPlan, MeasuredEvaluator, PlanCache, PlanEvaluator,
    ProblemKey, SearchPattern, ThreadPlan,
};
pub use timing::TrialConfig;
