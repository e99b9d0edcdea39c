"""Physical constants and fixed model values shared across modules."""

C_KM_S = 299_792.458          # speed of light [km/s]
C_M_S = 299_792_458.0         # speed of light [m/s]

R_EARTH_KM = 6378.137
R_MOON_KM = 1737.4
GM_EARTH = 398_600.4418       # km^3/s^2
GM_MOON = 4902.800066         # km^3/s^2

ELECTRON_CHARGE = 1.602176634e-19   # C
ELECTRON_MASS = 9.1093837015e-31    # kg
EPSILON_0 = 8.8541878128e-12        # F/m

# Delay integral coefficients (SI units, ds in metres, B in tesla).
TEC_DELAY_COEFF = 40.3
Q_COEFF = -2.2566e12
U_DENSITY_COEFF = 2437.0
U_FIELD_COEFF = 4.74e22

FREQ_L1 = 1575.42e6
FREQ_L5 = 1176.45e6
FREQ_E1 = 1575.42e6
FREQ_E5A = 1176.45e6

FREQUENCY_LABELS = {
    "L1": FREQ_L1,
    "L5": FREQ_L5,
    "E1": FREQ_E1,
    "E5a": FREQ_E5A,
}
