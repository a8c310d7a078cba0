use serde::Serialize;

use super::DeviceError;

/// SI-unit fluid and flow properties.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FluidProperties {
    /// ρ, kg/m³.
    pub density: f64,
    /// μ, Pa·s.
    pub viscosity: f64,
    /// σ, N/m.
    pub surface_tension: f64,
    /// d, m.
    pub jet_diameter: f64,
    /// a, m.
    pub droplet_diameter: f64,
    /// v, m/s.
    pub velocity: f64,
    /// γ̇, 1/s.
    pub shear_rate: f64,
    /// g, m/s².
    pub gravity: f64,
}

impl FluidProperties {
    /// Water at room temperature through a jet of the given diameter, with
    /// unit velocity and shear rate as placeholders.
    pub fn water(jet_diameter: f64) -> Self {
        Self {
            density: 1000.0,
            viscosity: 1.0e-3,
            surface_tension: 0.072,
            jet_diameter,
            droplet_diameter: jet_diameter,
            velocity: 1.0,
            shear_rate: 1.0,
            gravity: 9.81,
        }
    }

    fn check(&self) -> Result<(), DeviceError> {
        let fields = [
            ("density", self.density),
            ("viscosity", self.viscosity),
            ("surface_tension", self.surface_tension),
            ("jet_diameter", self.jet_diameter),
            ("droplet_diameter", self.droplet_diameter),
            ("velocity", self.velocity),
            ("shear_rate", self.shear_rate),
            ("gravity", self.gravity),
        ];
        for (name, value) in fields {
            if !(value > 0.0 && value.is_finite()) {
                return Err(DeviceError::NonPositiveInput { field: name, value });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Dimensionless {
    /// Ohnesorge, μ / √(ρσd).
    pub oh: f64,
    /// Weber, ρv²a / σ.
    pub we: f64,
    /// Reynolds, ρvd / μ.
    pub re: f64,
    /// Capillary, μγ̇a / σ.
    pub ca: f64,
    /// Bond, ρgd² / σ.
    pub bo: f64,
}

pub fn dimensionless(p: &FluidProperties) -> Result<Dimensionless, DeviceError> {
    p.check()?;
    Ok(Dimensionless {
        oh: p.viscosity / (p.density * p.surface_tension * p.jet_diameter).sqrt(),
        we: p.density * p.velocity * p.velocity * p.droplet_diameter / p.surface_tension,
        re: p.density * p.velocity * p.jet_diameter / p.viscosity,
        ca: p.viscosity * p.shear_rate * p.droplet_diameter / p.surface_tension,
        bo: p.density * p.gravity * p.jet_diameter * p.jet_diameter / p.surface_tension,
    })
}
