//! Linear block code construction: repetition, SPC, Hamming, BCH, extended
//! BCH, and parity-check matrices loaded from alist files.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::gf2m::{poly_lcm, Gf2m};
use super::matrix::{BinaryMatrix, BitVec};
use crate::error::{Error, Result};

/// An (n, k) binary linear code with generator and parity-check matrices.
#[derive(Debug, Clone)]
pub struct LinearCode {
    pub n: usize,
    pub k: usize,
    /// k x n generator matrix.
    pub g: BinaryMatrix,
    /// (n-k) x n parity-check matrix.
    pub h: BinaryMatrix,
    pub name: String,
    /// Column support M(i) of each row of H.
    pub row_supports: Vec<Vec<usize>>,
    /// Information set: columns where codeword bits determine the message
    /// (pivot columns of rref(G)).
    pub info_set: Vec<usize>,
    /// Column permutation applied by `make_systematic`: new column j holds
    /// the original column `col_perm[j]`. Identity for directly built codes.
    pub col_perm: Vec<usize>,
}

impl LinearCode {
    fn assemble(name: String, g: BinaryMatrix, h: BinaryMatrix) -> Result<LinearCode> {
        let n = g.cols();
        let k = g.rows();
        if h.cols() != n || h.rows() != n - k {
            return Err(Error::DimMismatch(format!(
                "code {name}: G is {}x{}, H is {}x{}",
                k,
                n,
                h.rows(),
                h.cols()
            )));
        }
        if g.rank() != k {
            return Err(Error::RankDeficient(format!("code {name}: rank(G) < k")));
        }
        if h.rank() != n - k {
            return Err(Error::RankDeficient(format!("code {name}: rank(H) < n-k")));
        }
        if !g.matmul(&h.transpose())?.is_zero() {
            return Err(Error::RankDeficient(format!("code {name}: G*H^T != 0")));
        }
        let row_supports: Vec<Vec<usize>> = (0..h.rows()).map(|i| h.row_support(i)).collect();
        if row_supports.iter().any(|s| s.is_empty()) {
            return Err(Error::RankDeficient(format!(
                "code {name}: H has an empty row"
            )));
        }
        let (_, _, info_set) = g.rref();
        let col_perm = (0..n).collect();
        Ok(LinearCode {
            n,
            k,
            g,
            h,
            name,
            row_supports,
            info_set,
            col_perm,
        })
    }

    /// True when G carries an identity block on the first k columns.
    pub fn is_systematic(&self) -> bool {
        (0..self.k).all(|i| (0..self.k).all(|j| self.g.get(i, j) == (i == j)))
    }

    /// c = u * G over GF(2).
    pub fn encode(&self, u: &BitVec) -> Result<BitVec> {
        if u.len() != self.k {
            return Err(Error::DimMismatch(format!(
                "encode: |u|={} but k={}",
                u.len(),
                self.k
            )));
        }
        self.g.left_mul(u)
    }

    /// s = v * H^T over GF(2); zero iff v is a codeword.
    pub fn hard_syndrome(&self, v: &BitVec) -> Result<BitVec> {
        if v.len() != self.n {
            return Err(Error::DimMismatch(format!(
                "syndrome: |v|={} but n={}",
                v.len(),
                self.n
            )));
        }
        self.h.mul_vec_t(v)
    }

    pub fn is_codeword(&self, v: &BitVec) -> bool {
        self.hard_syndrome(v).map(|s| s.is_zero()).unwrap_or(false)
    }
}

/// Systematize a code: permute columns so G = [I | P], H = [P^T | I].
/// The applied permutation is recorded in `col_perm` (composed with any
/// permutation already present).
pub fn make_systematic(code: &LinearCode) -> Result<LinearCode> {
    let (rref_g, rank, pivots) = code.g.rref();
    if rank != code.k {
        return Err(Error::RankDeficient(format!(
            "make_systematic: rank(G)={} < k={}",
            rank, code.k
        )));
    }
    let mut perm: Vec<usize> = pivots.clone();
    perm.extend((0..code.n).filter(|c| !pivots.contains(c)));
    let g_sys = rref_g.permute_cols(&perm);
    // G = [I | P] -> H = [P^T | I]
    let r = code.n - code.k;
    let mut h_sys = BinaryMatrix::zeros(r, code.n);
    for i in 0..r {
        for j in 0..code.k {
            if g_sys.get(j, code.k + i) {
                h_sys.set(i, j, true);
            }
        }
        h_sys.set(i, code.k + i, true);
    }
    let mut out = LinearCode::assemble(format!("{}|sys", code.name), g_sys, h_sys)?;
    out.col_perm = perm.iter().map(|&j| code.col_perm[j]).collect();
    Ok(out)
}

/// Code construction specification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CodeSpec {
    Repetition { n: usize },
    Spc { n: usize },
    Hamming { m: usize },
    Bch { m: usize, t: usize },
    ExtendedBch { m: usize, t: usize },
    FromAlist { path: String },
}

impl std::fmt::Display for CodeSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CodeSpec::Repetition { n } => write!(f, "repetition({n})"),
            CodeSpec::Spc { n } => write!(f, "spc({n})"),
            CodeSpec::Hamming { m } => write!(f, "hamming({m})"),
            CodeSpec::Bch { m, t } => write!(f, "bch({m},{t})"),
            CodeSpec::ExtendedBch { m, t } => write!(f, "extended_bch({m},{t})"),
            CodeSpec::FromAlist { path } => write!(f, "from_alist({path})"),
        }
    }
}

pub fn build_code(spec: &CodeSpec) -> Result<LinearCode> {
    match spec {
        CodeSpec::Repetition { n } => repetition(*n),
        CodeSpec::Spc { n } => spc(*n),
        CodeSpec::Hamming { m } => hamming(*m),
        CodeSpec::Bch { m, t } => bch(*m, *t),
        CodeSpec::ExtendedBch { m, t } => extended_bch(*m, *t),
        CodeSpec::FromAlist { path } => from_alist_path(Path::new(path)),
    }
}

pub fn repetition(n: usize) -> Result<LinearCode> {
    if n < 2 {
        return Err(Error::UnsupportedCode(format!("repetition({n}): n >= 2")));
    }
    let g = BinaryMatrix::from_rows(&[vec![1u8; n]]);
    let mut h = BinaryMatrix::zeros(n - 1, n);
    for i in 0..n - 1 {
        h.set(i, i, true);
        h.set(i, i + 1, true);
    }
    LinearCode::assemble(format!("repetition({n})"), g, h)
}

pub fn spc(n: usize) -> Result<LinearCode> {
    if n < 2 {
        return Err(Error::UnsupportedCode(format!("spc({n}): n >= 2")));
    }
    let k = n - 1;
    let mut g = BinaryMatrix::zeros(k, n);
    for i in 0..k {
        g.set(i, i, true);
        g.set(i, n - 1, true);
    }
    let h = BinaryMatrix::from_rows(&[vec![1u8; n]]);
    LinearCode::assemble(format!("spc({n})"), g, h)
}

/// Cyclic code with the given generator polynomial: G rows are shifts of g(x),
/// H is a null-space basis.
fn cyclic_from_generator(name: String, n: usize, gen: &[u8]) -> Result<LinearCode> {
    let deg = gen
        .iter()
        .rposition(|&c| c != 0)
        .ok_or_else(|| Error::UnsupportedCode("zero generator polynomial".into()))?;
    if deg >= n {
        return Err(Error::UnsupportedCode(format!(
            "{name}: generator degree {deg} >= n={n}"
        )));
    }
    let k = n - deg;
    let mut rows = Vec::with_capacity(k);
    for shift in 0..k {
        let mut row = vec![0u8; n];
        for (d, &c) in gen.iter().enumerate() {
            if c != 0 {
                row[shift + d] = 1;
            }
        }
        rows.push(row);
    }
    let g = BinaryMatrix::from_rows(&rows);
    let h = g.null_space();
    LinearCode::assemble(name, g, h)
}

/// Cyclic Hamming code of length 2^m - 1: generator is the primitive
/// polynomial (minimal polynomial of alpha).
pub fn hamming(m: usize) -> Result<LinearCode> {
    if m < 2 {
        return Err(Error::UnsupportedCode(format!("hamming({m}): m >= 2")));
    }
    let field = Gf2m::new(m)?;
    let gen = field.minimal_poly(1);
    let n = field.order();
    cyclic_from_generator(
        format!("hamming({},{})|poly={:#x}", n, n - m, field.poly),
        n,
        &gen,
    )
}

/// Generator polynomial of the t-error-correcting BCH code over GF(2^m):
/// lcm of minimal polynomials of alpha^1 .. alpha^2t.
pub fn bch_generator_poly(m: usize, t: usize) -> Result<Vec<u8>> {
    let field = Gf2m::new(m)?;
    let polys: Vec<Vec<u8>> = (1..=2 * t).map(|s| field.minimal_poly(s)).collect();
    Ok(poly_lcm(&polys))
}

pub fn bch(m: usize, t: usize) -> Result<LinearCode> {
    if t == 0 {
        return Err(Error::UnsupportedCode("bch: t >= 1".into()));
    }
    let field = Gf2m::new(m)?;
    let n = field.order();
    let gen = bch_generator_poly(m, t)?;
    let deg = gen.iter().rposition(|&c| c != 0).unwrap();
    if deg >= n {
        return Err(Error::UnsupportedCode(format!(
            "bch({m},{t}): generator degree {deg} leaves no information bits"
        )));
    }
    cyclic_from_generator(
        format!("bch({},{},t={})|poly={:#x}", n, n - deg, t, field.poly),
        n,
        &gen,
    )
}

/// BCH code extended by an overall parity bit at position n: every extended
/// codeword has even weight. H gains one all-ones row.
pub fn extended_bch(m: usize, t: usize) -> Result<LinearCode> {
    let base = bch(m, t)?;
    let n = base.n + 1;
    let mut g_rows = Vec::with_capacity(base.k);
    for i in 0..base.k {
        let mut row = base.g.row(i).to_bits();
        let parity = (row.iter().filter(|&&b| b != 0).count() % 2) as u8;
        row.push(parity);
        g_rows.push(row);
    }
    let g = BinaryMatrix::from_rows(&g_rows);
    let mut h_rows = Vec::with_capacity(base.n - base.k + 1);
    for i in 0..base.h.rows() {
        let mut row = base.h.row(i).to_bits();
        row.push(0);
        h_rows.push(row);
    }
    h_rows.push(vec![1u8; n]);
    let h = BinaryMatrix::from_rows(&h_rows);
    let poly = Gf2m::new(m)?.poly;
    LinearCode::assemble(
        format!("ebch({},{},t={})|poly={:#x}", n, base.k, t, poly),
        g,
        h,
    )
}

fn from_alist_path(path: &Path) -> Result<LinearCode> {
    let text = std::fs::read_to_string(path)?;
    let h = super::alist::parse_alist(&text)?;
    let g = h.null_space();
    if g.rows() == 0 {
        return Err(Error::RankDeficient(format!(
            "{}: H has full column rank, code is trivial",
            path.display()
        )));
    }
    // H from a file may carry redundant rows; keep a maximal independent subset.
    let h = if h.rank() == h.rows() {
        h
    } else {
        let mut rows: Vec<BitVec> = Vec::new();
        for i in 0..h.rows() {
            let mut cand = rows.clone();
            cand.push(h.row(i).clone());
            if BinaryMatrix::from_bitvec_rows(cand.clone()).rank() == cand.len() {
                rows = cand;
            }
        }
        BinaryMatrix::from_bitvec_rows(rows)
    };
    LinearCode::assemble(format!("alist({},{})", h.cols(), h.cols() - h.rows()), g, h)
}
