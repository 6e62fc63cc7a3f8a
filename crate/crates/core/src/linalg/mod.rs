//! Dense complex linear algebra over labeled register layouts.
//!
//! States and operators are plain dense arrays of `Complex64`; what makes
//! them usable for the protocol is the [`Layout`]: an ordered list of labeled
//! subsystems with arbitrary local dimensions, indexed row-major (the first
//! register is the most significant). All tensor bookkeeping — applying an
//! operator to a subset of registers, partial traces, assembling product
//! states over scattered registers — goes through the layout, so the rest of
//! the crate never touches raw index arithmetic.
//!
//! Spectral routines (operator/trace norms, unitary regularization) sit on a
//! self-contained complex Jacobi eigensolver in [`eigen`].

pub mod eigen;

use ndarray::{Array1, Array2};
use num_complex::Complex64 as C64;

use crate::{Error, Result, HERMITICITY_TOL, KERNEL_THRESHOLD};

/// Labels for the subsystems appearing in the protocol.
///
/// Indices are 1-based game positions. `ASwap`/`BSwap` are the extraction
/// ancillas of the swap stage (often written A′/B′), `AKick`/`BKick` the
/// phase-kickback controls (A″/B″), and `Env` holds purification registers
/// for noisy states.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Register {
    A(u32),
    B(u32),
    ASwap(u32),
    BSwap(u32),
    AKick(u32),
    BKick(u32),
    Env(u32),
}

impl std::fmt::Display for Register {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Register::A(j) => write!(f, "A{j}"),
            Register::B(j) => write!(f, "B{j}"),
            Register::ASwap(j) => write!(f, "A'{j}"),
            Register::BSwap(j) => write!(f, "B'{j}"),
            Register::AKick(j) => write!(f, "A''{j}"),
            Register::BKick(j) => write!(f, "B''{j}"),
            Register::Env(j) => write!(f, "E{j}"),
        }
    }
}

/// An ordered list of labeled registers with local dimensions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Layout {
    regs: Vec<(Register, usize)>,
}

impl Layout {
    /// Builds a layout; registers must be distinct and at least 1-dimensional.
    pub fn new(regs: Vec<(Register, usize)>) -> Result<Self> {
        for (i, (r, d)) in regs.iter().enumerate() {
            if *d == 0 {
                return Err(Error::DimensionMismatch {
                    left: 0,
                    right: 1,
                    context: "register dimension must be positive",
                });
            }
            if regs[..i].iter().any(|(s, _)| s == r) {
                return Err(Error::LayoutMismatch {
                    context: "duplicate register in layout",
                });
            }
        }
        Ok(Layout { regs })
    }

    /// Convenience: `n` qubit registers produced by `label`, indices `1..=n`.
    pub fn qubits(n: usize, label: fn(u32) -> Register) -> Self {
        Layout {
            regs: (1..=n as u32).map(|j| (label(j), 2)).collect(),
        }
    }

    /// Total Hilbert-space dimension.
    pub fn dim(&self) -> usize {
        self.regs.iter().map(|(_, d)| d).product()
    }

    /// Number of registers.
    pub fn len(&self) -> usize {
        self.regs.len()
    }

    /// True when the layout has no registers.
    pub fn is_empty(&self) -> bool {
        self.regs.is_empty()
    }

    /// The registers in layout order.
    pub fn registers(&self) -> &[(Register, usize)] {
        &self.regs
    }

    /// Position of `reg` in the layout.
    pub fn position(&self, reg: Register) -> Result<usize> {
        self.regs
            .iter()
            .position(|(r, _)| *r == reg)
            .ok_or_else(|| Error::UnknownRegister(reg.to_string()))
    }

    /// Local dimension of `reg`.
    pub fn dim_of(&self, reg: Register) -> Result<usize> {
        Ok(self.regs[self.position(reg)?].1)
    }

    /// Row-major strides per register.
    pub fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1usize; self.regs.len()];
        for i in (0..self.regs.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * self.regs[i + 1].1;
        }
        strides
    }

    /// Sub-layout of `keep`, preserving this layout's register order.
    pub fn sub(&self, keep: &[Register]) -> Result<Layout> {
        for r in keep {
            self.position(*r)?;
        }
        Ok(Layout {
            regs: self
                .regs
                .iter()
                .filter(|(r, _)| keep.contains(r))
                .cloned()
                .collect(),
        })
    }

    /// Layout of all registers not in `drop`, preserving order.
    pub fn without(&self, drop: &[Register]) -> Layout {
        Layout {
            regs: self
                .regs
                .iter()
                .filter(|(r, _)| !drop.contains(r))
                .cloned()
                .collect(),
        }
    }

    /// Concatenation with `other` (register sets must be disjoint).
    pub fn concat(&self, other: &Layout) -> Result<Layout> {
        let mut regs = self.regs.clone();
        regs.extend(other.regs.iter().cloned());
        Layout::new(regs)
    }

    /// All flat offsets generated by the registers at `positions`, iterating
    /// their indices row-major (first listed register most significant).
    fn offsets(&self, positions: &[usize]) -> Vec<usize> {
        let strides = self.strides();
        let dims: Vec<usize> = positions.iter().map(|&p| self.regs[p].1).collect();
        let total: usize = dims.iter().product();
        let mut out = Vec::with_capacity(total);
        for mut k in 0..total {
            let mut off = 0;
            for i in (0..positions.len()).rev() {
                off += (k % dims[i]) * strides[positions[i]];
                k /= dims[i];
            }
            out.push(off);
        }
        out
    }
}

/// Advisory structural flags carried by an [`Operator`].
///
/// Constructors that guarantee a property set the flag; [`Operator::validate`]
/// re-checks every claimed flag numerically on demand.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct OpFlags {
    pub hermitian: bool,
    pub unitary: bool,
    pub projector: bool,
}

/// A dense complex matrix.
#[derive(Clone, Debug)]
pub struct Operator {
    mat: Array2<C64>,
    pub flags: OpFlags,
}

impl Operator {
    /// Wraps a dense array with no advisory flags.
    pub fn from_array(mat: Array2<C64>) -> Self {
        Operator {
            mat,
            flags: OpFlags::default(),
        }
    }

    /// Wraps a dense array with the given flags (not validated here).
    pub fn with_flags(mat: Array2<C64>, flags: OpFlags) -> Self {
        Operator { mat, flags }
    }

    /// Builds a square operator from rows of `(re, im)` pairs.
    pub fn from_rows(rows: &[Vec<(f64, f64)>]) -> Self {
        let n = rows.len();
        let mat = Array2::from_shape_fn((n, n), |(i, j)| {
            let (re, im) = rows[i][j];
            C64::new(re, im)
        });
        Operator::from_array(mat)
    }

    /// The identity on a `dim`-dimensional space.
    pub fn identity(dim: usize) -> Self {
        Operator {
            mat: Array2::from_diag_elem(dim, C64::new(1.0, 0.0)),
            flags: OpFlags {
                hermitian: true,
                unitary: true,
                projector: true,
            },
        }
    }

    /// The zero operator.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Operator::from_array(Array2::zeros((rows, cols)))
    }

    /// Row dimension.
    pub fn rows(&self) -> usize {
        self.mat.nrows()
    }

    /// Column dimension.
    pub fn cols(&self) -> usize {
        self.mat.ncols()
    }

    /// Dimension of a square operator.
    pub fn dim(&self) -> Result<usize> {
        if self.rows() != self.cols() {
            return Err(Error::NotSquare {
                rows: self.rows(),
                cols: self.cols(),
            });
        }
        Ok(self.rows())
    }

    /// Underlying matrix.
    pub fn mat(&self) -> &Array2<C64> {
        &self.mat
    }

    /// Single entry.
    pub fn entry(&self, i: usize, j: usize) -> C64 {
        self.mat[(i, j)]
    }

    /// Conjugate transpose.
    pub fn dagger(&self) -> Operator {
        let (r, c) = (self.rows(), self.cols());
        let mat = Array2::from_shape_fn((c, r), |(i, j)| self.mat[(j, i)].conj());
        Operator {
            mat,
            flags: self.flags,
        }
    }

    /// Entrywise complex conjugate (no transpose).
    pub fn conjugate(&self) -> Operator {
        Operator {
            mat: self.mat.mapv(|z| z.conj()),
            flags: self.flags,
        }
    }

    /// Matrix product `self · rhs`.
    pub fn matmul(&self, rhs: &Operator) -> Result<Operator> {
        if self.cols() != rhs.rows() {
            return Err(Error::DimensionMismatch {
                left: self.cols(),
                right: rhs.rows(),
                context: "matmul",
            });
        }
        Ok(Operator::from_array(self.mat.dot(&rhs.mat)))
    }

    /// Linear combination `self + c · rhs`.
    pub fn add_scaled(&self, c: C64, rhs: &Operator) -> Result<Operator> {
        if self.rows() != rhs.rows() || self.cols() != rhs.cols() {
            return Err(Error::DimensionMismatch {
                left: self.rows(),
                right: rhs.rows(),
                context: "add_scaled",
            });
        }
        Ok(Operator::from_array(&self.mat + &(rhs.mat.mapv(|z| c * z))))
    }

    /// Sum of two operators.
    pub fn add(&self, rhs: &Operator) -> Result<Operator> {
        self.add_scaled(C64::new(1.0, 0.0), rhs)
    }

    /// Difference of two operators.
    pub fn sub(&self, rhs: &Operator) -> Result<Operator> {
        self.add_scaled(C64::new(-1.0, 0.0), rhs)
    }

    /// Scalar multiple.
    pub fn scaled(&self, c: C64) -> Operator {
        Operator::from_array(self.mat.mapv(|z| c * z))
    }

    /// Matrix trace.
    pub fn trace(&self) -> C64 {
        (0..self.rows().min(self.cols()))
            .map(|i| self.mat[(i, i)])
            .sum()
    }

    /// Largest entry magnitude.
    pub fn max_abs(&self) -> f64 {
        self.mat.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Largest entry magnitude of `self − rhs`.
    pub fn max_abs_diff(&self, rhs: &Operator) -> f64 {
        self.mat
            .iter()
            .zip(rhs.mat.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Maximal deviation from Hermiticity.
    pub fn hermiticity_defect(&self) -> f64 {
        let n = self.rows().min(self.cols());
        let mut dev = 0.0f64;
        for i in 0..n {
            for j in i..n {
                dev = dev.max((self.mat[(i, j)] - self.mat[(j, i)].conj()).norm());
            }
        }
        dev
    }

    /// Errors unless the operator is Hermitian within `tol` (scaled by the
    /// entry magnitude for large operators).
    pub fn require_hermitian(&self, tol: f64) -> Result<()> {
        self.dim()?;
        let dev = self.hermiticity_defect();
        if dev > tol * self.max_abs().max(1.0) {
            return Err(Error::NotHermitian { max_dev: dev });
        }
        Ok(())
    }

    /// Re-checks every advisory flag numerically within `tol`.
    pub fn validate(&self, tol: f64) -> Result<()> {
        if self.flags.hermitian || self.flags.projector {
            self.require_hermitian(tol)?;
        }
        if self.flags.unitary {
            let gram = self.dagger().matmul(self)?;
            let dev = gram.max_abs_diff(&Operator::identity(self.cols()));
            if dev > tol {
                return Err(Error::NotUnitary { max_dev: dev });
            }
        }
        if self.flags.projector {
            let sq = self.matmul(self)?;
            let dev = sq.max_abs_diff(self);
            if dev > tol {
                return Err(Error::NotProjective {
                    context: "P^2 != P".into(),
                    max_dev: dev,
                });
            }
        }
        Ok(())
    }

    /// Applies the (square) operator to a full-space state.
    pub fn apply_vec(&self, amps: &Array1<C64>) -> Result<Array1<C64>> {
        if self.cols() != amps.len() {
            return Err(Error::DimensionMismatch {
                left: self.cols(),
                right: amps.len(),
                context: "operator application",
            });
        }
        Ok(self.mat.dot(amps))
    }
}

/// A pure (possibly subnormalized) state over a [`Layout`].
#[derive(Clone, Debug)]
pub struct StateVector {
    layout: Layout,
    amps: Array1<C64>,
}

impl StateVector {
    /// Builds a state, checking the amplitude count against the layout.
    pub fn new(layout: Layout, amps: Vec<C64>) -> Result<Self> {
        if amps.len() != layout.dim() {
            return Err(Error::DimensionMismatch {
                left: amps.len(),
                right: layout.dim(),
                context: "state amplitudes vs layout dimension",
            });
        }
        Ok(StateVector {
            layout,
            amps: Array1::from(amps),
        })
    }

    /// The all-zeros state (useful as an accumulator).
    pub fn zeros(layout: Layout) -> Self {
        let dim = layout.dim();
        StateVector {
            layout,
            amps: Array1::zeros(dim),
        }
    }

    /// A computational basis state.
    pub fn basis_state(layout: Layout, index: usize) -> Result<Self> {
        let dim = layout.dim();
        if index >= dim {
            return Err(Error::DimensionMismatch {
                left: index,
                right: dim,
                context: "basis state index",
            });
        }
        let mut amps = Array1::zeros(dim);
        amps[index] = C64::new(1.0, 0.0);
        Ok(StateVector { layout, amps })
    }

    /// The layout.
    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    /// Amplitudes in layout (row-major) order.
    pub fn amps(&self) -> &Array1<C64> {
        &self.amps
    }

    /// Mutable amplitudes (layout unchanged).
    pub fn amps_mut(&mut self) -> &mut Array1<C64> {
        &mut self.amps
    }

    /// Euclidean norm.
    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Inner product `⟨self|other⟩` (conjugate-linear in `self`).
    pub fn inner(&self, other: &StateVector) -> Result<C64> {
        self.require_same_layout(other, "inner product")?;
        Ok(self
            .amps
            .iter()
            .zip(other.amps.iter())
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    /// Rescales in place.
    pub fn scale(&mut self, c: C64) {
        self.amps.mapv_inplace(|z| c * z);
    }

    /// `self + c · other`.
    pub fn add_scaled(&self, c: C64, other: &StateVector) -> Result<StateVector> {
        self.require_same_layout(other, "state sum")?;
        Ok(StateVector {
            layout: self.layout.clone(),
            amps: &self.amps + &other.amps.mapv(|z| c * z),
        })
    }

    /// The density operator `|self⟩⟨self|`.
    pub fn density(&self) -> Operator {
        let d = self.amps.len();
        let mat = Array2::from_shape_fn((d, d), |(i, j)| self.amps[i] * self.amps[j].conj());
        Operator::with_flags(
            mat,
            OpFlags {
                hermitian: true,
                unitary: false,
                projector: false,
            },
        )
    }

    /// Tensor product with another state on disjoint registers.
    pub fn tensor(&self, other: &StateVector) -> Result<StateVector> {
        let layout = self.layout.concat(&other.layout)?;
        let mut amps = Vec::with_capacity(self.amps.len() * other.amps.len());
        for a in self.amps.iter() {
            for b in other.amps.iter() {
                amps.push(a * b);
            }
        }
        StateVector::new(layout, amps)
    }

    fn require_same_layout(&self, other: &StateVector, context: &'static str) -> Result<()> {
        if self.layout != other.layout {
            return Err(Error::LayoutMismatch { context });
        }
        Ok(())
    }
}

/// Kronecker product of two matrices.
pub fn kron(a: &Operator, b: &Operator) -> Operator {
    let (ar, ac, br, bc) = (a.rows(), a.cols(), b.rows(), b.cols());
    let mat = Array2::from_shape_fn((ar * br, ac * bc), |(i, j)| {
        a.mat[(i / br, j / bc)] * b.mat[(i % br, j % bc)]
    });
    let flags = OpFlags {
        hermitian: a.flags.hermitian && b.flags.hermitian,
        unitary: a.flags.unitary && b.flags.unitary,
        projector: a.flags.projector && b.flags.projector,
    };
    Operator::with_flags(mat, flags)
}

/// Tensor product of a list of operators (first factor most significant).
pub fn tensor_product(ops: &[&Operator]) -> Result<Operator> {
    let mut iter = ops.iter();
    let first = iter.next().ok_or(Error::DimensionMismatch {
        left: 0,
        right: 1,
        context: "tensor_product needs at least one factor",
    })?;
    let mut acc = (*first).clone();
    for op in iter {
        acc = kron(&acc, op);
    }
    Ok(acc)
}

/// Applies `op` to the registers `regs` of `state` (identity elsewhere).
///
/// The tensor-factor order of `op` is the order of `regs` as given, which may
/// differ from the layout order.
pub fn apply_to_registers(
    state: &StateVector,
    op: &Operator,
    regs: &[Register],
) -> Result<StateVector> {
    let layout = state.layout();
    let positions: Vec<usize> = regs
        .iter()
        .map(|r| layout.position(*r))
        .collect::<Result<_>>()?;
    let dt: usize = positions.iter().map(|&p| layout.registers()[p].1).product();
    if op.rows() != dt || op.cols() != dt {
        return Err(Error::DimensionMismatch {
            left: op.rows(),
            right: dt,
            context: "operator vs target registers",
        });
    }
    let target_offsets = layout.offsets(&positions);
    let rest_positions: Vec<usize> = (0..layout.len())
        .filter(|p| !positions.contains(p))
        .collect();
    let rest_offsets = layout.offsets(&rest_positions);

    let mut out = Array1::zeros(state.amps.len());
    let mut column = vec![C64::new(0.0, 0.0); dt];
    for &base in &rest_offsets {
        for (i, &toff) in target_offsets.iter().enumerate() {
            column[i] = state.amps[base + toff];
        }
        for (o, &ooff) in target_offsets.iter().enumerate() {
            let mut acc = C64::new(0.0, 0.0);
            for (i, &ci) in column.iter().enumerate() {
                acc += op.mat[(o, i)] * ci;
            }
            out[base + ooff] = acc;
        }
    }
    Ok(StateVector {
        layout: layout.clone(),
        amps: out,
    })
}

/// Embeds `op` acting on `regs` into the full space of `layout`.
pub fn embed_operator(op: &Operator, layout: &Layout, regs: &[Register]) -> Result<Operator> {
    let positions: Vec<usize> = regs
        .iter()
        .map(|r| layout.position(*r))
        .collect::<Result<_>>()?;
    let dt: usize = positions.iter().map(|&p| layout.registers()[p].1).product();
    if op.rows() != dt || op.cols() != dt {
        return Err(Error::DimensionMismatch {
            left: op.rows(),
            right: dt,
            context: "operator vs target registers",
        });
    }
    let target_offsets = layout.offsets(&positions);
    let rest_positions: Vec<usize> = (0..layout.len())
        .filter(|p| !positions.contains(p))
        .collect();
    let rest_offsets = layout.offsets(&rest_positions);

    let d = layout.dim();
    let mut mat = Array2::zeros((d, d));
    for &base in &rest_offsets {
        for (o, &ooff) in target_offsets.iter().enumerate() {
            for (i, &ioff) in target_offsets.iter().enumerate() {
                mat[(base + ooff, base + ioff)] = op.mat[(o, i)];
            }
        }
    }
    Ok(Operator::with_flags(mat, op.flags))
}

/// Expectation value `⟨state| op_regs |state⟩`.
pub fn expectation_on(state: &StateVector, op: &Operator, regs: &[Register]) -> Result<C64> {
    let applied = apply_to_registers(state, op, regs)?;
    state.inner(&applied)
}

/// Partial trace of `rho` (over `layout`) onto the registers in `keep`.
///
/// The result's tensor factors follow the layout order of the kept
/// registers; the trace is preserved exactly up to rounding.
pub fn partial_trace(rho: &Operator, layout: &Layout, keep: &[Register]) -> Result<Operator> {
    let d = layout.dim();
    if rho.rows() != d || rho.cols() != d {
        return Err(Error::DimensionMismatch {
            left: rho.rows(),
            right: d,
            context: "density matrix vs layout",
        });
    }
    let keep_positions: Vec<usize> = {
        let mut ps: Vec<usize> = keep
            .iter()
            .map(|r| layout.position(*r))
            .collect::<Result<_>>()?;
        ps.sort_unstable();
        ps.dedup();
        ps
    };
    let trace_positions: Vec<usize> = (0..layout.len())
        .filter(|p| !keep_positions.contains(p))
        .collect();
    let keep_offsets = layout.offsets(&keep_positions);
    let trace_offsets = layout.offsets(&trace_positions);

    let dk = keep_offsets.len();
    let mut mat = Array2::zeros((dk, dk));
    for (i, &ki) in keep_offsets.iter().enumerate() {
        for (j, &kj) in keep_offsets.iter().enumerate() {
            let mut acc = C64::new(0.0, 0.0);
            for &t in &trace_offsets {
                acc += rho.mat[(ki + t, kj + t)];
            }
            mat[(i, j)] = acc;
        }
    }
    Ok(Operator::with_flags(
        mat,
        OpFlags {
            hermitian: rho.flags.hermitian,
            ..OpFlags::default()
        },
    ))
}

/// Assembles a product state over `layout` from factor states whose register
/// sets partition the layout.
pub fn embed_product_state(layout: &Layout, factors: &[&StateVector]) -> Result<StateVector> {
    // Every layout register must appear in exactly one factor.
    let mut owner: Vec<Option<(usize, usize)>> = vec![None; layout.len()];
    for (fi, f) in factors.iter().enumerate() {
        for (ri, (reg, dim)) in f.layout().registers().iter().enumerate() {
            let p = layout.position(*reg)?;
            if layout.registers()[p].1 != *dim {
                return Err(Error::DimensionMismatch {
                    left: *dim,
                    right: layout.registers()[p].1,
                    context: "factor register dimension",
                });
            }
            if owner[p].is_some() {
                return Err(Error::LayoutMismatch {
                    context: "register covered by two factors",
                });
            }
            owner[p] = Some((fi, ri));
        }
    }
    if owner.iter().any(|o| o.is_none()) {
        return Err(Error::LayoutMismatch {
            context: "layout register not covered by any factor",
        });
    }

    let dims: Vec<usize> = layout.registers().iter().map(|(_, d)| *d).collect();
    let factor_strides: Vec<Vec<usize>> = factors.iter().map(|f| f.layout().strides()).collect();
    let mut amps = Vec::with_capacity(layout.dim());
    let mut idx = vec![0usize; layout.len()];
    let mut findex = vec![0usize; factors.len()];
    for flat in 0..layout.dim() {
        // Decompose `flat` into per-register indices.
        let mut k = flat;
        for p in (0..layout.len()).rev() {
            idx[p] = k % dims[p];
            k /= dims[p];
        }
        findex.iter_mut().for_each(|x| *x = 0);
        for p in 0..layout.len() {
            let (fi, ri) = owner[p].unwrap();
            findex[fi] += idx[p] * factor_strides[fi][ri];
        }
        let mut amp = C64::new(1.0, 0.0);
        for (fi, f) in factors.iter().enumerate() {
            amp *= f.amps()[findex[fi]];
        }
        amps.push(amp);
    }
    StateVector::new(layout.clone(), amps)
}

/// Largest singular value.
pub fn operator_norm(op: &Operator) -> Result<f64> {
    let sv = eigen::singular_values(op.mat())?;
    Ok(sv.first().copied().unwrap_or(0.0))
}

/// Sum of singular values (Schatten 1-norm).
pub fn trace_norm(op: &Operator) -> Result<f64> {
    let sv = eigen::singular_values(op.mat())?;
    Ok(sv.iter().sum())
}

/// Unitary regularization of a Hermitian operator.
///
/// Zero eigenvalues (magnitude ≤ the kernel threshold) are first replaced by
/// +1 (adding the kernel projection), then the polar factor `T̃ |T̃|⁻¹` is
/// formed; equivalently every eigenvalue is mapped to its sign. The result is
/// Hermitian and unitary. Whenever `T` acts on one tensor factor of a
/// bipartite state `ψ` and `‖(T − U)ψ‖ ≤ ε` for a unitary `U` acting on the
/// *other* factor, the regularization satisfies `‖(T̂ − T)ψ‖ ≤ ε` (and hence
/// `‖(T̂ − U)ψ‖ ≤ 2ε`).
pub fn regularize(op: &Operator) -> Result<Operator> {
    op.require_hermitian(HERMITICITY_TOL)?;
    let (values, vectors) = eigen::hermitian_eigen(op.mat(), true)?;
    let v = vectors.expect("eigenvectors requested");
    let n = values.len();
    let signs: Vec<f64> = values
        .iter()
        .map(|&l| {
            if l.abs() <= KERNEL_THRESHOLD {
                1.0
            } else {
                l.signum()
            }
        })
        .collect();
    let mut mat = Array2::zeros((n, n));
    for (k, &s) in signs.iter().enumerate() {
        for i in 0..n {
            for j in 0..n {
                mat[(i, j)] += s * v[(i, k)] * v[(j, k)].conj();
            }
        }
    }
    Ok(Operator::with_flags(
        mat,
        OpFlags {
            hermitian: true,
            unitary: true,
            projector: false,
        },
    ))
}

/// Euclidean distance between two states on the same layout.
pub fn vector_distance(u: &StateVector, v: &StateVector) -> Result<f64> {
    u.require_same_layout(v, "vector distance")?;
    Ok(u.amps
        .iter()
        .zip(v.amps.iter())
        .map(|(a, b)| (a - b).norm_sqr())
        .sum::<f64>()
        .sqrt())
}

/// Trace distance `½‖ |u⟩⟨u| − |v⟩⟨v| ‖₁` between two (possibly
/// subnormalized) pure states, computed in closed form on their span:
/// `½ √((‖u‖² + ‖v‖²)² − 4|⟨u|v⟩|²)`.
pub fn pure_trace_distance(u: &StateVector, v: &StateVector) -> Result<f64> {
    let a = u.norm().powi(2);
    let b = v.norm().powi(2);
    let z = u.inner(v)?.norm_sqr();
    Ok(0.5 * ((a + b).powi(2) - 4.0 * z).max(0.0).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};

    /// Deterministic 64-bit LCG shared with the (numpy) oracle scripts that
    /// produced the frozen spectra below.
    pub(crate) struct Lcg(u64);

    impl Lcg {
        pub(crate) fn new(seed: u64) -> Self {
            Lcg(seed)
        }
        pub(crate) fn next_u64(&mut self) -> u64 {
            self.0 = self
                .0
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            self.0
        }
        pub(crate) fn next_f64(&mut self) -> f64 {
            (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        }
        pub(crate) fn next_c64(&mut self) -> C64 {
            let re = self.next_f64();
            let im = self.next_f64();
            C64::new(re, im)
        }
    }

    pub(crate) fn complex_matrix(seed: u64, rows: usize, cols: usize) -> Array2<C64> {
        let mut g = Lcg::new(seed);
        let mut m = Array2::zeros((rows, cols));
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = g.next_c64();
            }
        }
        m
    }

    pub(crate) fn hermitian_matrix(seed: u64, n: usize) -> Array2<C64> {
        let m = complex_matrix(seed, n, n);
        Array2::from_shape_fn((n, n), |(i, j)| 0.5 * (m[(i, j)] + m[(j, i)].conj()))
    }

    fn sz() -> Operator {
        Operator::from_rows(&[vec![(1.0, 0.0), (0.0, 0.0)], vec![(0.0, 0.0), (-1.0, 0.0)]])
    }

    fn sx() -> Operator {
        Operator::from_rows(&[vec![(0.0, 0.0), (1.0, 0.0)], vec![(1.0, 0.0), (0.0, 0.0)]])
    }

    fn ket(amps: &[(f64, f64)], label: fn(u32) -> Register) -> StateVector {
        let n = (amps.len() as f64).log2() as usize;
        StateVector::new(
            Layout::qubits(n, label),
            amps.iter().map(|&(re, im)| C64::new(re, im)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn tensor_product_matches_hand_expansion() {
        let zx = tensor_product(&[&sz(), &sx()]).unwrap();
        // σz ⊗ σx in the computational basis.
        let expected = [
            [0.0, 1.0, 0.0, 0.0],
            [1.0, 0.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, -1.0],
            [0.0, 0.0, -1.0, 0.0],
        ];
        for (i, row) in expected.iter().enumerate() {
            for (j, want) in row.iter().enumerate() {
                assert!((zx.entry(i, j) - C64::new(*want, 0.0)).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn partial_trace_of_bell_pair_is_maximally_mixed() {
        let phi = ket(
            &[
                (FRAC_1_SQRT_2, 0.0),
                (0.0, 0.0),
                (0.0, 0.0),
                (FRAC_1_SQRT_2, 0.0),
            ],
            Register::A,
        );
        let rho = phi.density();
        let reduced = partial_trace(&rho, phi.layout(), &[Register::A(1)]).unwrap();
        assert!(reduced.max_abs_diff(&Operator::identity(2).scaled(C64::new(0.5, 0.0))) < 1e-12);
        assert!((reduced.trace() - C64::new(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn operator_norm_examples() {
        // (σz + σx)/√2 is a Hermitian involution: largest singular value 1.
        let m = sz()
            .add(&sx())
            .unwrap()
            .scaled(C64::new(FRAC_1_SQRT_2, 0.0));
        assert!((operator_norm(&m).unwrap() - 1.0).abs() < 1e-9);

        // trace_norm(|0⟩⟨0| − |+⟩⟨+|) = √2.
        let zero = ket(&[(1.0, 0.0), (0.0, 0.0)], Register::B);
        let plus = ket(&[(FRAC_1_SQRT_2, 0.0), (FRAC_1_SQRT_2, 0.0)], Register::B);
        let diff = zero.density().sub(&plus.density()).unwrap();
        assert!((trace_norm(&diff).unwrap() - SQRT_2).abs() < 1e-9);
        assert!((pure_trace_distance(&zero, &plus).unwrap() - FRAC_1_SQRT_2).abs() < 1e-12);
        assert!((vector_distance(&zero, &plus).unwrap() - (2.0 - SQRT_2).sqrt()).abs() < 1e-12);
    }

    #[test]
    // Digits kept exactly as the oracle script emitted them.
    #[allow(clippy::excessive_precision)]
    fn jacobi_matches_frozen_lapack_spectra() {
        // Frozen oracle values: numpy eigvalsh/svd on LCG-generated inputs.
        let eig6 = [
            -2.537820246528605e+00,
            -1.210596984351193e+00,
            -7.086726608431083e-01,
            -4.134722549504365e-01,
            8.839327883055782e-01,
            1.917078973472157e+00,
        ];
        let (vals, vecs) = eigen::hermitian_eigen(&hermitian_matrix(7, 6), true).unwrap();
        for (a, b) in vals.iter().zip(eig6.iter()) {
            assert!((a - b).abs() < 1e-10, "eig6 mismatch: {a} vs {b}");
        }
        // Residual check: H v = λ v.
        let h = Operator::from_array(hermitian_matrix(7, 6));
        let v = vecs.unwrap();
        for (k, &lambda) in vals.iter().enumerate() {
            let col: Vec<C64> = (0..6).map(|i| v[(i, k)]).collect();
            let hv = h.apply_vec(&Array1::from(col.clone())).unwrap();
            let res: f64 = hv
                .iter()
                .zip(col.iter())
                .map(|(a, b)| (a - lambda * b).norm_sqr())
                .sum::<f64>()
                .sqrt();
            assert!(res < 1e-10, "eigenvector residual {res}");
        }

        let eig8 = [
            -2.138241769694414e+00,
            -1.472691671825213e+00,
            -7.303327454328173e-01,
            1.394068908185550e-01,
            8.825964669060524e-01,
            1.424680964945290e+00,
            1.999463228719080e+00,
            2.680653957112949e+00,
        ];
        let (vals, _) = eigen::hermitian_eigen(&hermitian_matrix(2024, 8), false).unwrap();
        for (a, b) in vals.iter().zip(eig8.iter()) {
            assert!((a - b).abs() < 1e-10, "eig8 mismatch: {a} vs {b}");
        }

        let sv = eigen::singular_values(&complex_matrix(99, 5, 7)).unwrap();
        let sv_expected = [
            3.073952977437088e+00,
            2.895328353805358e+00,
            1.887904142204205e+00,
            1.527060491813704e+00,
            5.159129533093405e-01,
        ];
        assert_eq!(sv.len(), 5);
        for (a, b) in sv.iter().zip(sv_expected.iter()) {
            assert!((a - b).abs() < 1e-10, "sv mismatch: {a} vs {b}");
        }
        let tn = trace_norm(&Operator::from_array(complex_matrix(99, 5, 7))).unwrap();
        assert!((tn - 9.900158918569694e+00).abs() < 1e-9);

        // Rank-deficient PSD: the compression path must keep the nonzero part.
        let w = complex_matrix(15, 10, 3);
        let mut g = Array2::zeros((10, 10));
        for i in 0..10 {
            for j in 0..10 {
                let mut acc = C64::new(0.0, 0.0);
                for k in 0..3 {
                    acc += w[(i, k)] * w[(j, k)].conj();
                }
                g[(i, j)] = acc;
            }
        }
        let (vals, _) = eigen::hermitian_eigen(&g, false).unwrap();
        let nonzero = [
            1.653850179746225e+00,
            5.060262494671379e+00,
            1.189527732959055e+01,
        ];
        for (a, b) in vals[7..].iter().zip(nonzero.iter()) {
            assert!((a - b).abs() < 1e-9, "psd10 mismatch: {a} vs {b}");
        }
        for v in &vals[..7] {
            assert!(v.abs() < 1e-10);
        }
    }

    #[test]
    fn regularize_examples() {
        let t = Operator::from_rows(&[vec![(2.0, 0.0), (0.0, 0.0)], vec![(0.0, 0.0), (0.0, 0.0)]]);
        assert!(regularize(&t).unwrap().max_abs_diff(&Operator::identity(2)) < 1e-12);

        let t = Operator::from_rows(&[vec![(1.0, 0.0), (0.0, 0.0)], vec![(0.0, 0.0), (-3.0, 0.0)]]);
        assert!(regularize(&t).unwrap().max_abs_diff(&sz()) < 1e-12);

        let skew =
            Operator::from_rows(&[vec![(0.0, 0.0), (1.0, 0.0)], vec![(-1.0, 0.0), (0.0, 0.0)]]);
        assert!(matches!(regularize(&skew), Err(Error::NotHermitian { .. })));
    }

    /// A bipartite draw matching the regularization hypothesis: `ψ` lives on
    /// `A ⊗ B`, `T` is Hermitian on `B`, and a unitary `U` on `A` mimics it
    /// across a near-maximally-entangled state. Returns
    /// `(T, I⊗T embedded, U⊗I embedded, ψ amplitudes)`.
    fn bipartite_draw(g: &mut Lcg, d: usize) -> (Operator, Operator, Operator, Array1<C64>) {
        // Involution V on B; U = Vᵀ on A mirrors it across Φ⁺.
        let v = regularize(&Operator::from_array({
            let m = Array2::from_shape_fn((d, d), |_| g.next_c64());
            Array2::from_shape_fn((d, d), |(i, j)| 0.5 * (m[(i, j)] + m[(j, i)].conj()))
        }))
        .unwrap();
        let u = Operator::from_array(Array2::from_shape_fn((d, d), |(i, j)| v.entry(j, i)));
        let h = {
            let m = Array2::from_shape_fn((d, d), |_| g.next_c64());
            Array2::from_shape_fn((d, d), |(i, j)| 0.5 * (m[(i, j)] + m[(j, i)].conj()))
        };
        let delta = 0.02 + 0.08 * g.next_f64().abs();
        let t = v
            .add_scaled(C64::new(delta, 0.0), &Operator::from_array(h))
            .unwrap();

        // ψ = maximally entangled + small random part, normalized.
        let mut amps: Vec<C64> = (0..d * d).map(|_| 0.15 * g.next_c64()).collect();
        let me = 1.0 / (d as f64).sqrt();
        for i in 0..d {
            amps[i * d + i] += C64::new(me, 0.0);
        }
        let nrm = amps.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        amps.iter_mut().for_each(|z| *z /= nrm);

        let id = Operator::identity(d);
        let t_full = kron(&id, &t);
        let u_full = kron(&u, &id);
        (t, t_full, u_full, Array1::from(amps))
    }

    fn diff_norm(a: &Operator, b: &Operator, psi: &Array1<C64>) -> f64 {
        let av = a.apply_vec(psi).unwrap();
        let bv = b.apply_vec(psi).unwrap();
        av.iter()
            .zip(bv.iter())
            .map(|(x, y)| (x - y).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    #[test]
    fn regularize_random_draws_track_nearby_unitaries() {
        // 200 seeded bipartite draws: T Hermitian on B, U unitary on A with
        // ‖(I⊗T − U⊗I)ψ‖ = ε. The regularization must be unitary, satisfy
        // ‖(T̂ − T)ψ‖ ≤ ε, and hence ‖(I⊗T̂ − U⊗I)ψ‖ ≤ 2ε.
        let mut g = Lcg::new(41);
        for draw in 0..200 {
            let d = 2 + (g.next_u64() % 3) as usize; // 2..=4
            let (t, t_full, u_full, psi) = bipartite_draw(&mut g, d);
            let t_hat = regularize(&t).unwrap();
            t_hat.validate(1e-9).unwrap();
            let t_hat_full = kron(&Operator::identity(d), &t_hat);

            let eps = diff_norm(&t_full, &u_full, &psi);
            let drift = diff_norm(&t_hat_full, &t_full, &psi);
            assert!(
                drift <= eps + 1e-9,
                "draw {draw}: ‖(T̂−T)ψ‖ = {drift} > ε = {eps}"
            );
            let to_unitary = diff_norm(&t_hat_full, &u_full, &psi);
            assert!(to_unitary <= 2.0 * eps + 1e-9);
        }
    }

    #[test]
    fn regularized_anticommutator_bound() {
        // ‖{T̂₁,T̂₂}ψ − {T₁,T₂}ψ‖ ≤ (6 + ‖T₁‖ + ‖T₂‖)·ε over 200 seeded
        // bipartite draws sharing one state per draw.
        let mut g = Lcg::new(4242);
        for draw in 0..200 {
            let d = 2 + (g.next_u64() % 2) as usize; // 2..=3
            let (t1, t1_full, u1_full, psi) = bipartite_draw(&mut g, d);
            // Second pair re-uses ψ: draw fresh operators only.
            let (t2, t2_full, u2_full, _unused_psi) = bipartite_draw(&mut g, d);

            let eps = diff_norm(&t1_full, &u1_full, &psi).max(diff_norm(&t2_full, &u2_full, &psi));
            let acomm = |a: &Operator, b: &Operator, psi: &Array1<C64>| {
                let ab = a.apply_vec(&b.apply_vec(psi).unwrap()).unwrap();
                let ba = b.apply_vec(&a.apply_vec(psi).unwrap()).unwrap();
                Array1::from_shape_fn(psi.len(), |i| ab[i] + ba[i])
            };
            let id = Operator::identity(d);
            let t1h = kron(&id, &regularize(&t1).unwrap());
            let t2h = kron(&id, &regularize(&t2).unwrap());
            let lhs = {
                let x = acomm(&t1h, &t2h, &psi);
                let y = acomm(&t1_full, &t2_full, &psi);
                x.iter()
                    .zip(y.iter())
                    .map(|(a, b)| (a - b).norm_sqr())
                    .sum::<f64>()
                    .sqrt()
            };
            let bound = (6.0 + operator_norm(&t1).unwrap() + operator_norm(&t2).unwrap()) * eps;
            assert!(
                lhs <= bound + 1e-9,
                "draw {draw}: acomm bound violated: {lhs} > {bound}"
            );
        }
    }

    #[test]
    fn embed_product_state_orders_factors_by_layout() {
        // Factors on scattered registers: layout [A1, B1, A2] with factors on
        // (A1, A2) and (B1) — the Bell pair sits on non-adjacent registers.
        let layout = Layout::new(vec![
            (Register::A(1), 2),
            (Register::B(1), 2),
            (Register::A(2), 2),
        ])
        .unwrap();
        let pair = StateVector::new(
            Layout::new(vec![(Register::A(1), 2), (Register::A(2), 2)]).unwrap(),
            vec![
                C64::new(FRAC_1_SQRT_2, 0.0),
                C64::new(0.0, 0.0),
                C64::new(0.0, 0.0),
                C64::new(FRAC_1_SQRT_2, 0.0),
            ],
        )
        .unwrap();
        let one = StateVector::new(
            Layout::new(vec![(Register::B(1), 2)]).unwrap(),
            vec![C64::new(0.0, 0.0), C64::new(1.0, 0.0)],
        )
        .unwrap();
        let full = embed_product_state(&layout, &[&pair, &one]).unwrap();
        // Amplitude of |a1 b1 a2⟩ = |010⟩: pair gives (a1,a2)=(0,0) → 1/√2.
        assert!((full.amps()[0b010] - C64::new(FRAC_1_SQRT_2, 0.0)).norm() < 1e-15);
        assert!((full.amps()[0b111] - C64::new(FRAC_1_SQRT_2, 0.0)).norm() < 1e-15);
        assert!((full.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn apply_to_registers_respects_given_order() {
        // CNOT on (B1 control, A1 target) where layout order is [A1, B1].
        let layout = Layout::new(vec![(Register::A(1), 2), (Register::B(1), 2)]).unwrap();
        let cnot = Operator::from_rows(&[
            vec![(1.0, 0.0), (0.0, 0.0), (0.0, 0.0), (0.0, 0.0)],
            vec![(0.0, 0.0), (1.0, 0.0), (0.0, 0.0), (0.0, 0.0)],
            vec![(0.0, 0.0), (0.0, 0.0), (0.0, 0.0), (1.0, 0.0)],
            vec![(0.0, 0.0), (0.0, 0.0), (1.0, 0.0), (0.0, 0.0)],
        ]);
        // |a1 b1⟩ = |01⟩: control B1 = 1 → flip A1 → |11⟩.
        let psi = StateVector::basis_state(layout.clone(), 0b01).unwrap();
        let out = apply_to_registers(&psi, &cnot, &[Register::B(1), Register::A(1)]).unwrap();
        assert!((out.amps()[0b11] - C64::new(1.0, 0.0)).norm() < 1e-15);
    }

    proptest! {
        #[test]
        fn partial_trace_preserves_trace(seed in 0u64..5000) {
            let layout = Layout::new(vec![
                (Register::A(1), 2),
                (Register::B(1), 3),
                (Register::Env(1), 2),
            ]).unwrap();
            let d = layout.dim();
            let rho = Operator::from_array(complex_matrix(seed, d, d));
            let reduced = partial_trace(&rho, &layout, &[Register::B(1)]).unwrap();
            prop_assert!((reduced.trace() - rho.trace()).norm() < 1e-12);
        }

        #[test]
        fn traced_out_trace_norm_contracts(seed in 0u64..2000) {
            // ‖tr_B O‖₁ ≤ ‖O‖₁ for arbitrary (non-Hermitian) O.
            let layout = Layout::new(vec![
                (Register::A(1), 3),
                (Register::B(1), 4),
            ]).unwrap();
            let d = layout.dim();
            let o = Operator::from_array(complex_matrix(seed.wrapping_add(77), d, d));
            let reduced = partial_trace(&o, &layout, &[Register::A(1)]).unwrap();
            prop_assert!(
                trace_norm(&reduced).unwrap() <= trace_norm(&o).unwrap() + 1e-9
            );
        }

        #[test]
        fn unitaries_have_operator_norm_one(seed in 0u64..2000) {
            let n = 2 + (seed % 5) as usize;
            let u = regularize(&Operator::from_array(hermitian_matrix(seed.wrapping_add(3), n))).unwrap();
            prop_assert!((operator_norm(&u).unwrap() - 1.0).abs() < 1e-9);
        }

        #[test]
        fn pure_trace_distance_vs_vector_distance(seed in 0u64..2000) {
            // For unit vectors: ½‖uu†−vv†‖₁ = √(1−|⟨u,v⟩|²) ≤ ‖u−v‖.
            let mut g = Lcg::new(seed.wrapping_add(11));
            let n = 2 + (seed % 4) as usize;
            let layout = Layout::new(vec![(Register::A(1), n)]).unwrap();
            let mk = |g: &mut Lcg| {
                let mut amps: Vec<C64> = (0..n).map(|_| g.next_c64()).collect();
                let nrm = amps.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                amps.iter_mut().for_each(|z| *z /= nrm);
                StateVector::new(Layout::new(vec![(Register::A(1), n)]).unwrap(), amps).unwrap()
            };
            let _ = layout;
            let u = mk(&mut g);
            let v = mk(&mut g);
            let td = pure_trace_distance(&u, &v).unwrap();
            let overlap = u.inner(&v).unwrap().norm_sqr();
            prop_assert!((td - (1.0 - overlap).max(0.0).sqrt()).abs() < 1e-10);
            prop_assert!(td <= vector_distance(&u, &v).unwrap() + 1e-12);
            // Cross-check the closed form against the generic trace norm.
            let diff = u.density().sub(&v.density()).unwrap();
            prop_assert!((2.0 * td - trace_norm(&diff).unwrap()).abs() < 1e-9);
        }
    }
}
