//! Standard tunneling model for a single defect.
//!
//! Energies are kept in GHz (i.e. GHz·h) everywhere; SI units only appear
//! at the dipole/field boundary in [`transverse_coupling`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Elementary charge times one nanometre, divided by Planck's constant,
/// in Hz per (V/m).
const E_NM_OVER_H_HZ_PER_V_PER_M: f64 = 1.602_176_634e-19 * 1e-9 / 6.626_070_15e-34;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Location {
    BarrierInterior,
    OpenEdge,
    CoveredEdge,
    ElectrodeSurface,
}

impl Location {
    /// Defects inside the tunnel barrier or at its edges see no DC gate field.
    pub fn is_junction(self) -> bool {
        !matches!(self, Location::ElectrodeSurface)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoLevelSystem {
    /// Tunnel energy Δ (GHz).
    pub delta: f64,
    /// Intrinsic asymmetry offset ε_i (GHz).
    pub eps0: f64,
    /// Electric dipole magnitude (e·nm).
    pub dipole: f64,
    /// Projection of the dipole onto the local field axis, in [-1, 1].
    pub dipole_orientation: f64,
    /// Deformation potential γ (GHz per unit strain).
    pub deformation: f64,
    pub location: Location,
    /// Coordinate within the defect's region (nm).
    pub position: [f64; 2],
}

impl TwoLevelSystem {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0) {
            return Err(Error::invalid("delta", format!("must be > 0, got {}", self.delta)));
        }
        if !(self.dipole >= 0.0) {
            return Err(Error::invalid("dipole", format!("must be >= 0, got {}", self.dipole)));
        }
        if !(-1.0..=1.0).contains(&self.dipole_orientation) {
            return Err(Error::invalid(
                "dipole_orientation",
                format!("must lie in [-1, 1], got {}", self.dipole_orientation),
            ));
        }
        Ok(())
    }

    /// Transition frequency (GHz) at the given bias.
    pub fn frequency(&self, arms: &LeverArms, bias: BiasPoint) -> f64 {
        let eps = asymmetry(self, arms, bias);
        self.delta.hypot(eps)
    }
}

/// DC gate and piezo voltages (V). `(0, 0)` is the reference bias.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BiasPoint {
    pub v_gate: f64,
    pub v_piezo: f64,
}

impl BiasPoint {
    pub const REFERENCE: BiasPoint = BiasPoint {
        v_gate: 0.0,
        v_piezo: 0.0,
    };

    pub fn new(v_gate: f64, v_piezo: f64) -> Self {
        Self { v_gate, v_piezo }
    }
}

/// Linearised bias channels: dε/dV for the gate and the piezo (GHz per V).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LeverArms {
    pub kappa_gate: f64,
    pub kappa_piezo: f64,
}

/// ε = ε_i + κ_gate·V_gate + κ_piezo·V_piezo.
pub fn asymmetry(tls: &TwoLevelSystem, arms: &LeverArms, bias: BiasPoint) -> f64 {
    tls.eps0 + arms.kappa_gate * bias.v_gate + arms.kappa_piezo * bias.v_piezo
}

/// E = √(Δ² + ε²).
pub fn transition_energy(delta: f64, eps: f64) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(Error::invalid("delta", format!("must be > 0, got {delta}")));
    }
    Ok(delta.hypot(eps))
}

/// Transverse coupling g (MHz) to a qubit field of rms strength `field_rms` (V/m),
/// evaluated at the intrinsic asymmetry.
///
/// The sign follows the dipole orientation; rates only ever use g².
pub fn transverse_coupling(tls: &TwoLevelSystem, field_rms: f64) -> f64 {
    transverse_coupling_at(tls, tls.eps0, field_rms)
}

/// Same as [`transverse_coupling`] but at an arbitrary asymmetry `eps` (GHz).
pub fn transverse_coupling_at(tls: &TwoLevelSystem, eps: f64, field_rms: f64) -> f64 {
    let energy = tls.delta.hypot(eps);
    if energy == 0.0 || !energy.is_finite() {
        return 0.0;
    }
    let longitudinal_hz = tls.dipole * tls.dipole_orientation * field_rms * E_NM_OVER_H_HZ_PER_V_PER_M;
    longitudinal_hz * 1e-6 * (tls.delta / energy)
}

/// Dipole magnitude (e·nm) whose bare coupling p·F/h equals 1 MHz at the given field.
pub fn dipole_for_one_mhz(field_rms: f64) -> f64 {
    1e6 / (field_rms * E_NM_OVER_H_HZ_PER_V_PER_M)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn tls(delta: f64, eps0: f64) -> TwoLevelSystem {
        TwoLevelSystem {
            delta,
            eps0,
            dipole: 0.5,
            dipole_orientation: 1.0,
            deformation: 1.0,
            location: Location::BarrierInterior,
            position: [0.0, 0.0],
        }
    }

    #[test]
    fn asymmetry_examples() {
        let zero = LeverArms::default();
        assert_eq!(asymmetry(&tls(1.0, 0.0), &zero, BiasPoint::REFERENCE), 0.0);

        let screened = LeverArms {
            kappa_gate: 0.0,
            kappa_piezo: 0.05,
        };
        assert_eq!(asymmetry(&tls(1.0, 1.0), &screened, BiasPoint::new(10.0, 0.0)), 1.0);

        let arms = LeverArms {
            kappa_gate: 0.2,
            kappa_piezo: 0.05,
        };
        assert_relative_eq!(asymmetry(&tls(1.0, 1.0), &arms, BiasPoint::new(5.0, 10.0)), 2.5);
    }

    #[test]
    fn transition_energy_examples() {
        assert_eq!(transition_energy(3.0, 4.0).unwrap(), 5.0);
        assert_eq!(transition_energy(6.0, 0.0).unwrap(), 6.0);
        assert_eq!(
            transition_energy(6.0, -2.5).unwrap(),
            transition_energy(6.0, 2.5).unwrap()
        );
        assert!(transition_energy(0.0, 1.0).is_err());
        assert!(transition_energy(-1.0, 1.0).is_err());
    }

    #[test]
    fn coupling_examples() {
        let t = tls(5.0, 0.0);
        assert_eq!(transverse_coupling(&t, 0.0), 0.0);

        let mut unit = tls(5.0, 0.0);
        unit.dipole = dipole_for_one_mhz(1000.0);
        assert_relative_eq!(transverse_coupling(&unit, 1000.0), 1.0, max_relative = 1e-12);

        // 0.2 e·nm in the small-junction field 2.3 kV/m, at the symmetry point:
        // 0.2 * 1.602176634e-28 C·m * 2300 V/m / 6.62607015e-34 J·s = 111.227... MHz
        let mut small = tls(5.0, 0.0);
        small.dipole = 0.2;
        let g = transverse_coupling(&small, 2300.0);
        let expected = 0.2 * 1.602_176_634e-28 * 2300.0 / 6.626_070_15e-34 / 1e6;
        assert_relative_eq!(g, expected, max_relative = 1e-12);
        assert_relative_eq!(g, 111.2275, max_relative = 1e-5);
    }

    #[test]
    fn coupling_vanishes_far_from_symmetry_point() {
        let t = tls(1.0, 1e9);
        assert!(transverse_coupling(&t, 2300.0).abs() < 1e-6);
    }

    #[test]
    fn validation() {
        assert!(tls(1.0, 0.0).validate().is_ok());
        assert!(tls(0.0, 0.0).validate().is_err());
        let mut t = tls(1.0, 0.0);
        t.dipole = -0.1;
        assert!(t.validate().is_err());
    }

    proptest! {
        #[test]
        fn energy_even_and_bounded(delta in 1e-3f64..50.0, eps in -50.0f64..50.0) {
            let e = transition_energy(delta, eps).unwrap();
            prop_assert_eq!(e, transition_energy(delta, -eps).unwrap());
            prop_assert!(e >= delta);
            prop_assert!(e >= eps.abs());
        }

        #[test]
        fn coupling_linear_in_dipole_and_field(
            p in 0.01f64..2.0, f in 1.0f64..5000.0, scale in 0.1f64..10.0, eps in -5.0f64..5.0,
        ) {
            let mut t = tls(2.0, eps);
            t.dipole = p;
            let g = transverse_coupling(&t, f);
            prop_assert!((transverse_coupling(&t, f * scale) - g * scale).abs() <= 1e-9 * g.abs() * scale);
            t.dipole = p * scale;
            prop_assert!((transverse_coupling(&t, f) - g * scale).abs() <= 1e-9 * g.abs() * scale);
        }

        #[test]
        fn vertex_of_sweep_is_zero_asymmetry(
            delta in 0.1f64..10.0, eps0 in -3.0f64..3.0, kappa in 0.01f64..1.0,
        ) {
            let t = tls(delta, eps0);
            let arms = LeverArms { kappa_gate: 0.0, kappa_piezo: kappa };
            // Dense 1D piezo sweep; the minimum sits where ε crosses zero.
            let v_zero = -eps0 / kappa;
            let best = (-4000..=4000)
                .map(|i| v_zero + i as f64 * 1e-3)
                .map(|v| (v, t.frequency(&arms, BiasPoint::new(0.0, v))))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap();
            prop_assert!((best.0 - v_zero).abs() < 1.5e-3);
            prop_assert!((best.1 - delta).abs() < 1e-9 * delta.max(1.0) + kappa * kappa * 1e-6);
        }

        #[test]
        fn junction_defects_flat_along_gate(
            eps0 in -3.0f64..3.0, vp in -50.0f64..50.0, vg in -20.0f64..20.0, kp in -0.01f64..0.01,
        ) {
            let t = tls(1.0, eps0);
            let arms = LeverArms { kappa_gate: 0.0, kappa_piezo: kp };
            let f0 = t.frequency(&arms, BiasPoint::new(0.0, vp));
            prop_assert_eq!(f0, t.frequency(&arms, BiasPoint::new(vg, vp)));
        }
    }
}
