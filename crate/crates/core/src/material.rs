//! Material property laws for hygroscopic wood.
//!
//! All laws are pure functions of the local moisture content `x` [kg/kg,
//! dry basis] and temperature `T` [K]. Anisotropic quantities are returned
//! per grid axis in the order (x, y, z).

use crate::error::{CoreError, Result};

/// Validity window for temperatures fed to the sorption laws [K].
pub const TEMPERATURE_WINDOW: (f64, f64) = (200.0, 500.0);

/// Reference temperature of the vapor diffusivity power law [K].
const DIFFUSIVITY_REF_TEMP: f64 = 293.15;

/// Exponent of the vapor diffusivity power law [-].
const DIFFUSIVITY_EXPONENT: f64 = 1.75;

/// Buck correlation for saturation vapor pressure: scale [Pa] and the three
/// shape constants; the pole sits at 16.01 K (= -257.14 degrees Celsius).
const BUCK_SCALE: f64 = 611.21;
const BUCK_A: f64 = 18.678;
const BUCK_B: f64 = 234.5;
const BUCK_POLE: f64 = 16.01;

/// Sorption isotherm exponent per kelvin [1/K].
const SORPTION_EXPONENT_PER_K: f64 = 6.453e-3;

/// Affine law for the latent heat of vaporization [J/kg], [J/(kg K)].
const VAPORIZATION_H0: f64 = 3.1671e6;
const VAPORIZATION_SLOPE: f64 = 2433.2;

/// Weight of the bound-water enthalpy correction below fiber saturation [-].
const BOND_WEIGHT: f64 = 0.4;

/// Parameters of the wood chip and its surrounding air.
///
/// Defaults describe a spruce chip in drying air; the two trailing scale
/// factors multiply the heat conductivity and the vapor diffusivity tensors
/// and exist to retune the transport time scales without touching the laws
/// themselves (see [`crate::presets`]).
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialParams {
    /// Oven-dry density [kg/m^3].
    pub rho_d: f64,
    /// Specific heat capacity of dry wood [J/(kg K)].
    pub c_pd: f64,
    /// Specific heat capacity of liquid water [J/(kg K)].
    pub c_pw: f64,
    /// Heat conductivity of liquid water [W/(m K)].
    pub lambda_w: f64,
    /// Heat conductivity of dry wood per axis [W/(m K)].
    pub lambda_d: [f64; 3],
    /// Vapor diffusivity of dry wood per axis [m^2/s].
    pub delta_d: [f64; 3],
    /// Surface heat transfer coefficient [W/(m^2 K)].
    pub alpha: f64,
    /// Surface mass transfer coefficient [m/s].
    pub beta: f64,
    /// Molar mass of water [kg/mol].
    pub m_h2o: f64,
    /// Universal gas constant [J/(mol K)].
    pub r_gas: f64,
    /// Absolute humidity of the drying air [kg/m^3].
    pub rho_inf: f64,
    /// Scale factor on the heat conductivity tensor [-].
    pub diffusivity_scale_heat: f64,
    /// Scale factor on the vapor diffusivity tensor [-].
    pub diffusivity_scale_mass: f64,
}

impl Default for MaterialParams {
    fn default() -> Self {
        Self {
            rho_d: 500.0,
            c_pd: 1500.0,
            c_pw: 4190.0,
            lambda_w: 0.56,
            lambda_d: [1.0e-7, 2.0e-9, 2.0e-9],
            delta_d: [0.24, 0.12, 0.12],
            alpha: 45.0,
            beta: 0.075,
            m_h2o: 18.01528e-3,
            r_gas: 8.3144621,
            rho_inf: 0.007,
            diffusivity_scale_heat: 1.0,
            diffusivity_scale_mass: 1.0,
        }
    }
}

impl MaterialParams {
    /// Checks positivity and sign constraints on every parameter.
    ///
    /// Transfer coefficients `alpha` and `beta` may be zero (insulated,
    /// sealed surface); densities, capacities, and scale factors must be
    /// strictly positive, conductivities and diffusivities nonnegative.
    pub fn validate(&self) -> Result<()> {
        let strictly_positive = [
            ("rho_d", self.rho_d),
            ("c_pd", self.c_pd),
            ("c_pw", self.c_pw),
            ("M_H2O", self.m_h2o),
            ("R", self.r_gas),
            ("diffusivity_scale_heat", self.diffusivity_scale_heat),
            ("diffusivity_scale_mass", self.diffusivity_scale_mass),
        ];
        for (name, value) in strictly_positive {
            if !(value > 0.0) || !value.is_finite() {
                return Err(CoreError::InvalidParameter {
                    name,
                    reason: "must be strictly positive",
                    value,
                });
            }
        }
        let nonnegative = [
            ("lambda_w", self.lambda_w),
            ("lambda_d_x", self.lambda_d[0]),
            ("lambda_d_y", self.lambda_d[1]),
            ("lambda_d_z", self.lambda_d[2]),
            ("delta_d_x", self.delta_d[0]),
            ("delta_d_y", self.delta_d[1]),
            ("delta_d_z", self.delta_d[2]),
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("rho_inf", self.rho_inf),
        ];
        for (name, value) in nonnegative {
            if !(value >= 0.0) || !value.is_finite() {
                return Err(CoreError::InvalidParameter {
                    name,
                    reason: "must be finite and nonnegative",
                    value,
                });
            }
        }
        Ok(())
    }

    /// Volumetric heat capacity s(x) = rho_d (c_pd + x c_pw) [J/(m^3 K)].
    pub fn heat_capacity_volumetric(&self, x: f64) -> Result<f64> {
        check_moisture("heat_capacity_volumetric", x)?;
        Ok(self.rho_d * (self.c_pd + x * self.c_pw))
    }

    /// Heat conductivity per axis [W/(m K)]:
    /// lambda_i = (lambda_d_i + x lambda_w / (1 + x)) * scale_heat.
    pub fn heat_conductivity(&self, x: f64) -> Result<[f64; 3]> {
        check_moisture("heat_conductivity", x)?;
        let wet = x * self.lambda_w / (1.0 + x);
        Ok([
            (self.lambda_d[0] + wet) * self.diffusivity_scale_heat,
            (self.lambda_d[1] + wet) * self.diffusivity_scale_heat,
            (self.lambda_d[2] + wet) * self.diffusivity_scale_heat,
        ])
    }

    /// Vapor diffusivity per axis [m^2/s]:
    /// delta_i = delta_d_i (T / 293.15 K)^1.75 * scale_mass.
    pub fn mass_diffusivity(&self, temperature: f64) -> Result<[f64; 3]> {
        if !(temperature > 0.0) || !temperature.is_finite() {
            return Err(CoreError::Domain {
                law: "mass_diffusivity",
                name: "T",
                value: temperature,
                window: "(0 K, inf)",
            });
        }
        let factor = (temperature / DIFFUSIVITY_REF_TEMP).powf(DIFFUSIVITY_EXPONENT)
            * self.diffusivity_scale_mass;
        Ok([
            self.delta_d[0] * factor,
            self.delta_d[1] * factor,
            self.delta_d[2] * factor,
        ])
    }

    /// Fiber saturation point x_fsp(T) = 0.598 - 0.001 T [kg/kg].
    ///
    /// Valid for T in [200 K, 500 K], where the law stays positive.
    pub fn fiber_saturation(&self, temperature: f64) -> Result<f64> {
        check_temperature("fiber_saturation", temperature)?;
        Ok(0.598 - 1.0e-3 * temperature)
    }

    /// Saturation vapor pressure after Buck [Pa].
    ///
    /// p_sat(T) = 611.21 exp((18.678 - t/234.5) t / (T - 16.01)) with
    /// t = T - 273.15 [K]; the rational exponent has a pole at 16.01 K.
    pub fn saturation_pressure(&self, temperature: f64) -> Result<f64> {
        if !(temperature > BUCK_POLE) || !temperature.is_finite() {
            return Err(CoreError::Domain {
                law: "saturation_pressure",
                name: "T",
                value: temperature,
                window: "(16.01 K, inf)",
            });
        }
        let t_c = temperature - 273.15;
        let exponent = (BUCK_A - t_c / BUCK_B) * t_c / (temperature - BUCK_POLE);
        Ok(BUCK_SCALE * exponent.exp())
    }

    /// Relative humidity of air in equilibrium with the wood surface [-].
    ///
    /// Below fiber saturation phi_s = 1 - (1 - x/x_fsp)^(6.453e-3 T); at and
    /// above fiber saturation the surface behaves like free water (phi_s = 1).
    /// The result is clamped to [0, 1].
    pub fn relative_humidity_surface(&self, x: f64, temperature: f64) -> Result<f64> {
        check_moisture("relative_humidity_surface", x)?;
        let x_fsp = self.fiber_saturation(temperature)?;
        if x >= x_fsp {
            return Ok(1.0);
        }
        let exponent = SORPTION_EXPONENT_PER_K * temperature;
        let phi = 1.0 - (1.0 - x / x_fsp).powf(exponent);
        Ok(phi.clamp(0.0, 1.0))
    }

    /// Absolute humidity of air in equilibrium with the wood surface
    /// [kg/m^3]: rho(x, T) = M phi_s(x, T) p_sat(T) / (R T).
    pub fn abs_humidity_surface(&self, x: f64, temperature: f64) -> Result<f64> {
        let phi = self.relative_humidity_surface(x, temperature)?;
        let p_sat = self.saturation_pressure(temperature)?;
        Ok(self.m_h2o * phi * p_sat / (self.r_gas * temperature))
    }

    /// Specific enthalpy of adsorption [J/kg].
    ///
    /// Equals the latent heat of vaporization dh_v(T) = 3.1671e6 - 2433.2 T
    /// above fiber saturation and gains a bound-water correction
    /// 0.4 dh_v (1 - x/x_fsp)^2 below it; continuous at x = x_fsp.
    pub fn enthalpy_adsorption(&self, x: f64, temperature: f64) -> Result<f64> {
        check_moisture("enthalpy_adsorption", x)?;
        let x_fsp = self.fiber_saturation(temperature)?;
        let dh_v = VAPORIZATION_H0 - VAPORIZATION_SLOPE * temperature;
        if x >= x_fsp {
            return Ok(dh_v);
        }
        let deficit = 1.0 - x / x_fsp;
        Ok(dh_v * (1.0 + BOND_WEIGHT * deficit * deficit))
    }

    /// Moisture flux through the surface, per unit area [m/s (kg/kg)]:
    /// Gamma_x = (beta / rho_d) (rho_inf - rho(x, T)).
    ///
    /// Negative when the surface is wetter than the drying air.
    pub fn boundary_flux_moisture(&self, x: f64, temperature: f64) -> Result<f64> {
        let rho_surface = self.abs_humidity_surface(x, temperature)?;
        Ok(self.beta / self.rho_d * (self.rho_inf - rho_surface))
    }

    /// Heat flux through the surface without the ambient drive [W/m^2]:
    /// Gamma_T = -alpha T + dh_ads(x, T) beta (rho_inf - rho(x, T)).
    ///
    /// The affine ambient contribution +alpha T_inf is applied by the caller,
    /// which keeps the right-hand side input-affine.
    pub fn boundary_flux_heat(&self, x: f64, temperature: f64) -> Result<f64> {
        let rho_surface = self.abs_humidity_surface(x, temperature)?;
        let dh_ads = self.enthalpy_adsorption(x, temperature)?;
        Ok(-self.alpha * temperature + dh_ads * self.beta * (self.rho_inf - rho_surface))
    }

    /// Moisture content whose surface humidity matches the drying air at the
    /// given temperature [kg/kg], i.e. the zero of rho(x, T) = rho_inf.
    ///
    /// Found by bisection on [0, fiber saturation]; the surface humidity is
    /// strictly increasing in x there. Errors when even bone-dry material
    /// outgases against the ambient humidity.
    pub fn equilibrium_moisture(&self, temperature: f64) -> Result<f64> {
        let x_fsp = self.fiber_saturation(temperature)?;
        if self.abs_humidity_surface(0.0, temperature)? >= self.rho_inf {
            return Err(CoreError::InvalidParameter {
                name: "rho_inf",
                reason: "ambient humidity is below the dry-surface humidity",
                value: self.rho_inf,
            });
        }
        if self.abs_humidity_surface(x_fsp, temperature)? <= self.rho_inf {
            return Ok(x_fsp);
        }
        let mut lo = 0.0f64;
        let mut hi = x_fsp;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.abs_humidity_surface(mid, temperature)? < self.rho_inf {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

fn check_moisture(law: &'static str, x: f64) -> Result<()> {
    if !(x >= 0.0) || !x.is_finite() {
        return Err(CoreError::Domain {
            law,
            name: "x",
            value: x,
            window: "[0, inf)",
        });
    }
    Ok(())
}

fn check_temperature(law: &'static str, temperature: f64) -> Result<()> {
    if !(temperature >= TEMPERATURE_WINDOW.0 && temperature <= TEMPERATURE_WINDOW.1) {
        return Err(CoreError::Domain {
            law,
            name: "T",
            value: temperature,
            window: "[200 K, 500 K]",
        });
    }
    Ok(())
}
