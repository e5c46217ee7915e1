use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar the engine can run at: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Sum + Send + Sync + 'static
{
    /// Conversion from an `f64` literal (hyperparameters, constants).
    fn cast(x: f64) -> Self {
        Self::from_f64(x).expect("finite f64 literal")
    }

    /// Widening conversion for logging and metrics.
    fn as_f64(self) -> f64 {
        self.to_f64().expect("float widens to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
