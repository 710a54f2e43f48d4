use serde::{Deserialize, Serialize};

/// Time-aligned `(x_t, u_t, d_t)` records; `u[t]` drives the transition to `x[t + 1]`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trajectory {
    pub id: usize,
    pub x: Vec<Vec<f64>>,
    pub u: Vec<Vec<f64>>,
    pub d: Vec<Vec<f64>>,
    /// Seconds.
    pub t: Vec<f64>,
}

impl Trajectory {
    pub fn with_capacity(n: usize) -> Self {
        Self {
            id: 0,
            x: Vec::with_capacity(n),
            u: Vec::with_capacity(n),
            d: Vec::with_capacity(n),
            t: Vec::with_capacity(n),
        }
    }

    pub fn push(&mut self, x: Vec<f64>, u: Vec<f64>, d: Vec<f64>, t: f64) {
        self.x.push(x);
        self.u.push(u);
        self.d.push(d);
        self.t.push(t);
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn dims(&self) -> Option<Dims> {
        Some(Dims {
            n_x: self.x.first()?.len(),
            n_u: self.u.first()?.len(),
            n_d: self.d.first()?.len(),
        })
    }

    /// Records `start..end`, keeping the id.
    pub fn slice(&self, start: usize, end: usize) -> Self {
        Self {
            id: self.id,
            x: self.x[start..end].to_vec(),
            u: self.u[start..end].to_vec(),
            d: self.d[start..end].to_vec(),
            t: self.t[start..end].to_vec(),
        }
    }

    /// Appends `other`'s records after this one.
    pub fn extend(&mut self, other: &Trajectory) {
        self.x.extend_from_slice(&other.x);
        self.u.extend_from_slice(&other.u);
        self.d.extend_from_slice(&other.d);
        self.t.extend_from_slice(&other.t);
    }

    /// Checks equal lengths, constant channel counts and strictly increasing time.
    pub fn validate(&self) -> Result<(), String> {
        let n = self.t.len();
        if self.x.len() != n || self.u.len() != n || self.d.len() != n {
            return Err("x, u, d and t must have equal lengths".into());
        }
        if let Some(dims) = self.dims() {
            for k in 0..n {
                if self.x[k].len() != dims.n_x
                    || self.u[k].len() != dims.n_u
                    || self.d[k].len() != dims.n_d
                {
                    return Err(format!("channel count changes at record {k}"));
                }
            }
        }
        if self.t.windows(2).any(|w| !(w[1] > w[0])) {
            return Err("timestamps must be strictly increasing".into());
        }
        Ok(())
    }
}

/// Channel counts of state, control and disturbance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub n_x: usize,
    pub n_u: usize,
    pub n_d: usize,
}
