use crate::Matrix;

/// A model whose trainable state is a fixed, ordered list of named matrices.
///
/// Gradients use the same type as the parameters, so optimizers, the
/// gradient checker and checkpoints can walk both in lockstep. Visit order
/// must be stable for a given shape.
pub trait Parameters {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&str, &'a Matrix));
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Matrix));

    fn tensors(&self) -> Vec<(String, &Matrix)> {
        let mut out = Vec::new();
        self.visit(&mut |name, m| out.push((name.to_string(), m)));
        out
    }

    fn num_parameters(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_, m| n += m.len());
        n
    }

    fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.visit(&mut |_, m| out.extend_from_slice(m.as_slice()));
        out
    }

    /// Overwrites every tensor from a flat buffer in visit order.
    fn assign_flat(&mut self, flat: &[f64]) {
        let mut offset = 0;
        self.visit_mut(&mut |_, m| {
            let n = m.len();
            m.as_mut_slice().copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        });
        assert_eq!(offset, flat.len(), "flat buffer length mismatch");
    }

    fn zero(&mut self) {
        self.visit_mut(&mut |_, m| m.fill(0.0));
    }

    fn round_to_f32(&mut self) {
        self.visit_mut(&mut |_, m| m.round_to_f32());
    }

    fn all_finite(&self) -> bool {
        let mut ok = true;
        self.visit(&mut |_, m| ok &= m.is_finite());
        ok
    }
}

/// Prefixes nested parameter names, e.g. `mlp_user.` + `layer0.weight`.
pub fn visit_prefixed<'a, P: Parameters + ?Sized>(
    prefix: &str,
    inner: &'a P,
    f: &mut dyn FnMut(&str, &'a Matrix),
) {
    inner.visit(&mut |name, m| f(&format!("{prefix}.{name}"), m));
}

pub fn visit_mut_prefixed<P: Parameters + ?Sized>(
    prefix: &str,
    inner: &mut P,
    f: &mut dyn FnMut(&str, &mut Matrix),
) {
    inner.visit_mut(&mut |name, m| f(&format!("{prefix}.{name}"), m));
}

impl Parameters for Matrix {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&str, &'a Matrix)) {
        f("value", self);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Matrix)) {
        f("value", self);
    }
}

impl<P: Parameters> Parameters for Vec<P> {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&str, &'a Matrix)) {
        for (i, p) in self.iter().enumerate() {
            visit_prefixed(&i.to_string(), p, f);
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Matrix)) {
        for (i, p) in self.iter_mut().enumerate() {
            visit_mut_prefixed(&i.to_string(), p, f);
        }
    }
}
