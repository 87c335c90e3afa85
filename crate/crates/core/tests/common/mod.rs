#![allow(dead_code)]

/// Small, fast configuration shared by the integration tests.
pub const SMALL: &str = r#"
[cavity]
focal_length = "30 mm"
mirror_radius = "50 mm"
finesse = 250
escape_efficiency = 0.6

[crystal]
length = "10 mm"
signal_index = 1.8

[pump]
wavelength = "532 nm"
waist = "120 um"
power = "1 W"

[signal]
wavelength = "1064 nm"

[basis]
truncation = 6

[squeezing]
pump_ratio = 0.5
reported_modes = 4
spectrum_points = 11

[homodyne]
lo_modes = ["TEM00", [1, 0]]
window_samples = 200
windows_per_sweep = 36
sweeps = 2
seed = 7

[design]
scan_points = 5

[output]
profile_modes = 2
profile_points = 9
"#;
