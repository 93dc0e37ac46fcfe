use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::scalar::{Real, Vec2};

type ScalarFn<T> = Arc<dyn Fn(Vec2<T>) -> T + Send + Sync>;
type VectorFn<T> = Arc<dyn Fn(Vec2<T>) -> Vec2<T> + Send + Sync>;

/// Manufactured solution `u` with its gradient and source `f = -Δu`.
#[derive(Clone)]
pub enum Manufactured<T> {
    /// `u = xy`, harmonic and in Q1.
    Xy,
    /// `u = x^2 - y^2`, harmonic and in Q2.
    X2MinusY2,
    /// `u = sin(πx) sin(πy)`, `f = 2π² u`.
    SinSin,
    /// `u = 0`; only the operator matters.
    Zero,
    /// User supplied harmonic function.
    Harmonic { name: String, u: ScalarFn<T>, grad: VectorFn<T> },
}

impl<T: Real> Manufactured<T> {
    pub fn harmonic(name: &str, u: impl Fn(Vec2<T>) -> T + Send + Sync + 'static, grad: impl Fn(Vec2<T>) -> Vec2<T> + Send + Sync + 'static) -> Self {
        Manufactured::Harmonic { name: name.to_string(), u: Arc::new(u), grad: Arc::new(grad) }
    }

    pub fn u(&self, x: Vec2<T>) -> T {
        match self {
            Manufactured::Xy => x[0] * x[1],
            Manufactured::X2MinusY2 => x[0] * x[0] - x[1] * x[1],
            Manufactured::SinSin => (T::PI() * x[0]).sin() * (T::PI() * x[1]).sin(),
            Manufactured::Zero => T::zero(),
            Manufactured::Harmonic { u, .. } => u(x),
        }
    }

    pub fn grad(&self, x: Vec2<T>) -> Vec2<T> {
        match self {
            Manufactured::Xy => [x[1], x[0]],
            Manufactured::X2MinusY2 => [x[0] + x[0], -(x[1] + x[1])],
            Manufactured::SinSin => {
                let (sx, cx) = (T::PI() * x[0]).sin_cos();
                let (sy, cy) = (T::PI() * x[1]).sin_cos();
                [T::PI() * cx * sy, T::PI() * sx * cy]
            }
            Manufactured::Zero => [T::zero(); 2],
            Manufactured::Harmonic { grad, .. } => grad(x),
        }
    }

    /// `f = -Δu`.
    pub fn source(&self, x: Vec2<T>) -> T {
        match self {
            Manufactured::SinSin => T::lit(2.0) * T::PI() * T::PI() * self.u(x),
            _ => T::zero(),
        }
    }

    pub fn name(&self) -> &str {
        match self {
            Manufactured::Xy => "xy",
            Manufactured::X2MinusY2 => "x2-y2",
            Manufactured::SinSin => "sinsin",
            Manufactured::Zero => "zero",
            Manufactured::Harmonic { name, .. } => name,
        }
    }
}

impl<T: Real> fmt::Debug for Manufactured<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Manufactured({})", self.name())
    }
}

impl<T: Real> FromStr for Manufactured<T> {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "xy" => Ok(Manufactured::Xy),
            "x2-y2" => Ok(Manufactured::X2MinusY2),
            "sinsin" => Ok(Manufactured::SinSin),
            "zero" => Ok(Manufactured::Zero),
            other => Err(format!("unknown manufactured solution '{other}' (expected xy, x2-y2, sinsin or zero)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CutBc {
    Dirichlet,
    Neumann,
}

impl FromStr for CutBc {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "dirichlet" => Ok(CutBc::Dirichlet),
            "neumann" => Ok(CutBc::Neumann),
            other => Err(format!("unknown cut boundary condition '{other}'")),
        }
    }
}

/// Condition on the sides of the ambient box that meet Ω.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoxBc {
    /// Every active node on the box boundary is fixed to `u`.
    StrongDirichlet,
    Neumann,
}

#[derive(Clone, Debug)]
pub struct ProblemSpec<T: Real> {
    pub solution: Manufactured<T>,
    pub cut_bc: CutBc,
    pub box_bc: BoxBc,
}

impl<T: Real> ProblemSpec<T> {
    pub fn new(solution: Manufactured<T>, cut_bc: CutBc) -> Self {
        Self { solution, cut_bc, box_bc: BoxBc::StrongDirichlet }
    }

    pub fn with_box_bc(mut self, box_bc: BoxBc) -> Self {
        self.box_bc = box_bc;
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StabMode {
    None,
    GhostFace,
    GhostElemS0,
    GhostElemS1,
    Agfem,
}

impl StabMode {
    pub fn name(self) -> &'static str {
        match self {
            StabMode::None => "none",
            StabMode::GhostFace => "ghost-face",
            StabMode::GhostElemS0 => "ghost-elem-s0",
            StabMode::GhostElemS1 => "ghost-elem-s1",
            StabMode::Agfem => "agfem",
        }
    }

    pub fn is_ghost(self) -> bool {
        matches!(self, StabMode::GhostFace | StabMode::GhostElemS0 | StabMode::GhostElemS1)
    }
}

impl FromStr for StabMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "none" => Ok(StabMode::None),
            "ghost-face" => Ok(StabMode::GhostFace),
            "ghost-elem-s0" => Ok(StabMode::GhostElemS0),
            "ghost-elem-s1" => Ok(StabMode::GhostElemS1),
            "agfem" => Ok(StabMode::Agfem),
            other => Err(format!("unknown stabilization '{other}'")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BetaMode {
    /// Element-wise parameter from the local eigenproblem.
    Local,
    /// `beta = c / h`.
    Global,
}

impl FromStr for BetaMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "local" => Ok(BetaMode::Local),
            "global" => Ok(BetaMode::Global),
            other => Err(format!("unknown beta mode '{other}'")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StabilizationSpec<T> {
    pub mode: StabMode,
    /// Ghost-penalty coefficients; entry `j - 1` weights the `j`-th derivative
    /// jump, the last entry is reused for higher orders, and the element-based
    /// variants use the first entry.
    pub tau: Vec<T>,
    /// Face penalty scaled with `h^{2j+1}` instead of `h^{2j-1}`.
    pub neumann_scaling: bool,
    pub beta_mode: BetaMode,
    pub beta_c: T,
    pub eta_star: T,
    pub max_chain: usize,
}

impl<T: Real> StabilizationSpec<T> {
    /// Defaults: `tau = 0.1`, global `beta = 10 / h` when stabilized, local
    /// eigenvalue-based `beta` otherwise, `eta* = 1`, chains up to 10.
    pub fn new(mode: StabMode) -> Self {
        Self {
            mode,
            tau: vec![T::lit(0.1)],
            neumann_scaling: false,
            beta_mode: if mode == StabMode::None { BetaMode::Local } else { BetaMode::Global },
            beta_c: T::lit(10.0),
            eta_star: T::one(),
            max_chain: 10,
        }
    }

    pub fn tau_for(&self, j: usize) -> T {
        self.tau[(j.max(1) - 1).min(self.tau.len() - 1)]
    }
}
