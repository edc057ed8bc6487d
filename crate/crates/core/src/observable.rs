use crate::error::{parse_expr, Error, Result};
use crate::expr::Expr;

/// The data `(g, h, ψ)` of a Feynman–Kac problem: killing/creation rate
/// `g(x)`, source `h(x, t)` and boundary/terminal data `ψ(x, t)`.
///
/// Along a path, `γ_t = exp ∫ g(X_s) ds` and `H_t = ∫ γ_s h(X_s, s) ds`.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservableSpec {
    pub g: Expr,
    pub h: Expr,
    pub psi: Expr,
    /// Conformal weights `Δ_2..Δ_n` when the observable came from an SLE
    /// configuration; informational.
    pub weights: Option<Vec<f64>>,
}

impl ObservableSpec {
    pub fn new(g: Expr, h: Expr, psi: Expr) -> Result<Self> {
        if g.depends_on_time() {
            return Err(Error::Config(format!(
                "rate g = `{g}` must not depend on t"
            )));
        }
        Ok(ObservableSpec {
            g,
            h,
            psi,
            weights: None,
        })
    }

    pub fn parse(g: &str, h: &str, psi: &str, n: usize) -> Result<Self> {
        ObservableSpec::new(
            parse_expr(g, n, "g")?,
            parse_expr(h, n, "h")?,
            parse_expr(psi, n, "psi")?,
        )
    }

    /// `g = h = 0`, `ψ = 0`: paths carry no weights.
    pub fn plain() -> Self {
        ObservableSpec {
            g: Expr::zero(),
            h: Expr::zero(),
            psi: Expr::zero(),
            weights: None,
        }
    }

    pub fn with_psi(mut self, psi: Expr) -> Self {
        self.psi = psi;
        self
    }
}
