//! Banded LU with partial pivoting, optionally with one dense trailing column.

/// Square matrix with `kl` sub- and `ku` super-diagonals. When bordered, the last
/// column is stored densely and excluded from the band.
#[derive(Clone, Debug)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    ldab: usize,
    ab: Vec<f64>,
    border: Option<Vec<f64>>,
}

#[derive(Clone, Debug)]
pub struct BandLu {
    m: BandMatrix,
    piv: Vec<usize>,
}

/// Zero pivot at the given column.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SingularPivot(pub usize);

impl BandMatrix {
    pub fn new(n: usize, kl: usize, ku: usize, bordered: bool) -> Self {
        let ldab = 2 * kl + ku + 1;
        BandMatrix { n, kl, ku, ldab, ab: vec![0.0; ldab * n], border: bordered.then(|| vec![0.0; n]) }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    fn banded_cols(&self) -> usize {
        if self.border.is_some() {
            self.n - 1
        } else {
            self.n
        }
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        j * self.ldab + self.kl + self.ku + i - j
    }

    /// Adds `v` to entry (i, j). Panics if (i, j) lies outside the stored pattern.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        if let Some(b) = self.border.as_mut() {
            if j == self.n - 1 {
                b[i] += v;
                return;
            }
        }
        assert!(i <= j + self.kl && j <= i + self.ku, "entry ({i}, {j}) outside band kl={} ku={}", self.kl, self.ku);
        let k = self.idx(i, j);
        self.ab[k] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if let Some(b) = self.border.as_ref() {
            if j == self.n - 1 {
                return b[i];
            }
        }
        if i > j + self.kl || j > i + self.ku {
            return 0.0;
        }
        self.ab[self.idx(i, j)]
    }

    /// y = A x.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let nb = self.banded_cols();
        let mut y = vec![0.0; self.n];
        for (i, yi) in y.iter_mut().enumerate() {
            for j in i.saturating_sub(self.kl)..nb.min(i + self.ku + 1) {
                *yi += self.ab[self.idx(i, j)] * x[j];
            }
            if let Some(b) = self.border.as_ref() {
                *yi += b[i] * x[self.n - 1];
            }
        }
        y
    }

    pub fn factor(mut self) -> Result<BandLu, SingularPivot> {
        let n = self.n;
        let nb = self.banded_cols();
        let (kl, ku) = (self.kl, self.ku);
        let mut piv = vec![0; nb];
        for k in 0..nb {
            let last = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = self.ab[self.idx(k, k)].abs();
            for i in k + 1..=last {
                let v = self.ab[self.idx(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == 0.0 || !best.is_finite() {
                return Err(SingularPivot(k));
            }
            piv[k] = p;
            let jmax = (k + ku + kl).min(nb - 1);
            if p != k {
                for j in k..=jmax {
                    let (a, b) = (self.idx(k, j), self.idx(p, j));
                    self.ab.swap(a, b);
                }
                if let Some(b) = self.border.as_mut() {
                    b.swap(k, p);
                }
            }
            let pivot = self.ab[self.idx(k, k)];
            for i in k + 1..=last {
                let ik = self.idx(i, k);
                let l = self.ab[ik] / pivot;
                self.ab[ik] = l;
                if l == 0.0 {
                    continue;
                }
                for j in k + 1..=jmax {
                    let (ij, kj) = (self.idx(i, j), self.idx(k, j));
                    self.ab[ij] -= l * self.ab[kj];
                }
                if let Some(b) = self.border.as_mut() {
                    b[i] -= l * b[k];
                }
            }
        }
        if let Some(b) = self.border.as_ref() {
            let last = b[n - 1];
            if last == 0.0 || !last.is_finite() {
                return Err(SingularPivot(n - 1));
            }
        }
        Ok(BandLu { m: self, piv })
    }
}

impl BandLu {
    /// Solves A x = b in place.
    pub fn solve(&self, b: &mut [f64]) {
        let a = &self.m;
        let n = a.n;
        let nb = a.banded_cols();
        assert_eq!(b.len(), n);
        for k in 0..nb {
            let p = self.piv[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            if bk != 0.0 {
                for i in k + 1..=(k + a.kl).min(n - 1) {
                    b[i] -= a.ab[a.idx(i, k)] * bk;
                }
            }
        }
        let xl = match a.border.as_ref() {
            Some(border) => {
                b[n - 1] /= border[n - 1];
                b[n - 1]
            }
            None => 0.0,
        };
        for i in (0..nb).rev() {
            let mut s = b[i];
            for j in i + 1..=(i + a.ku + a.kl).min(nb - 1) {
                s -= a.ab[a.idx(i, j)] * b[j];
            }
            if let Some(border) = a.border.as_ref() {
                s -= border[i] * xl;
            }
            b[i] = s / a.ab[a.idx(i, i)];
        }
    }
}
