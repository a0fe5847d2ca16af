use crate::error::{Error, Result};

/// A container of trainable parameters, walkable as a sequence of flat chunks.
///
/// Gradients use the same type as the parameters they belong to, so a model
/// and its gradient can be flattened into aligned vectors.
pub trait Params {
    fn visit(&self, f: &mut dyn FnMut(&[f64]));
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64]));

    fn num_params(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |c| n += c.len());
        n
    }

    fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        self.visit(&mut |c| out.extend_from_slice(c));
        out
    }

    fn load_flat(&mut self, src: &[f64]) -> Result<()> {
        let n = self.num_params();
        if src.len() != n {
            return Err(Error::dim("flat parameter vector", n, src.len()));
        }
        let mut off = 0;
        self.visit_mut(&mut |c| {
            c.copy_from_slice(&src[off..off + c.len()]);
            off += c.len();
        });
        Ok(())
    }

    fn fill(&mut self, value: f64) {
        self.visit_mut(&mut |c| c.iter_mut().for_each(|x| *x = value));
    }

    fn scale(&mut self, k: f64) {
        self.visit_mut(&mut |c| c.iter_mut().for_each(|x| *x *= k));
    }

    fn is_finite(&self) -> bool {
        let mut ok = true;
        self.visit(&mut |c| ok &= c.iter().all(|x| x.is_finite()));
        ok
    }
}

/// Accumulate `other` into `acc` chunk-wise. Both must share a layout.
pub fn add_assign<P: Params>(acc: &mut P, other: &P) {
    let flat = other.flatten();
    let mut off = 0;
    acc.visit_mut(&mut |c| {
        for x in c.iter_mut() {
            *x += flat[off];
            off += 1;
        }
    });
}

impl<P: Params> Params for Vec<P> {
    fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        for p in self {
            p.visit(f);
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        for p in self {
            p.visit_mut(f);
        }
    }
}
