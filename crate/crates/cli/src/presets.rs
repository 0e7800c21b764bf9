//! Built-in scenarios for the published figures. Each is a full configuration
//! (a sweep, usually with an optimization per point) plus the plot layout of
//! its table.

use crate::plot::PlotSpec;

#[derive(Debug, Clone)]
pub struct Preset {
    pub name: &'static str,
    pub config: &'static str,
    pub plot: PlotSpec,
}

const FIG2A: &str = r#"
scheme = "effective"

[sweep]
parameter = "c_qu"
log = { start = 0.1, stop = 100.0, points = 61 }
series = [{ eta_s = 0.7 }, { eta_s = 0.8 }, { eta_s = 0.9 }]
"#;

const FIG2B: &str = r#"
scheme = "effective"

[sweep]
parameter = "kappa1_hz"
log = { start = 1e4, stop = 2e7, points = 61 }
series = [{ eta_s = 0.7 }, { eta_s = 0.8 }, { eta_s = 0.9 }]
"#;

const FIG3A: &str = r#"
scheme = "cavity_feedback"

[sweep]
parameter = "n_cav"
log = { start = 300.0, stop = 13000.0, points = 9 }
series = [{ eta_s = 0.7 }, { eta_s = 0.8 }, { eta_s = 0.9 }]
sideband_reference = true

[optimize]
free = ["phi_s", "delta_a"]
starts = 8
"#;

const FIG3B: &str = r#"
scheme = "cavity_feedback"

[sweep]
parameter = "n_cav"
log = { start = 300.0, stop = 13000.0, points = 9 }
series = [{ eta_s = 0.7 }, { eta_s = 0.8 }, { eta_s = 0.9 }]
sideband_reference = true

[optimize]
free = ["phi_s", "delta_a", "kappa1"]
starts = 8
"#;

const FIG4A: &str = r#"
scheme = "cavity_feedback"

[path]
delay_convention = "round-trip"

[sweep]
parameter = "n_cav"
log = { start = 300.0, stop = 13000.0, points = 9 }
series = [
    { eta_s = 0.7, delay_s = 0.0 },
    { eta_s = 0.7, delay_s = 5e-8 },
    { eta_s = 0.7, delay_s = 1e-7 },
    { eta_s = 0.9, delay_s = 0.0 },
    { eta_s = 0.9, delay_s = 5e-8 },
    { eta_s = 0.9, delay_s = 1e-7 },
]

[optimize]
free = ["phi_s", "delta_a", "kappa1"]
starts = 8
"#;

const FIG4B: &str = r#"
scheme = "mirror_feedback"

[sweep]
parameter = "n_cav"
log = { start = 300.0, stop = 13000.0, points = 9 }
series = [{ eta_s = 0.7 }, { eta_s = 0.8 }, { eta_s = 0.9 }]

[optimize]
free = ["phi_s", "tau_s"]
starts = 4
bounds = { tau_s = [1e-8, 5e-7] }
warm_start = { phi_s = 0.0, tau_s = 1.25e-7 }
"#;

const FIG7A: &str = r#"
scheme = "entangle"

[om]
q_m = 2e7

[sweep]
parameter = "n_cav"
values = [500.0, 1000.0, 2000.0, 4000.0]
series = [{ eta_s = 0.7 }, { eta_s = 0.8 }, { eta_s = 0.9 }]

[optimize]
free = ["phi_s", "delta_a", "kappa1", "kappa2", "gamma_tm", "tau_p"]
starts = 4
warm_start = { phi_s = 0.0, delta_a = 1e6, kappa1 = 8.6e5, kappa2 = 8e5, gamma_tm = 1.8e5, tau_p = 1.56e-5 }
"#;

const FIG7B: &str = r#"
scheme = "entangle"

[om]
q_m = 1e8

[sweep]
parameter = "n_cav"
values = [500.0, 1000.0, 2000.0, 4000.0]
series = [{ eta_s = 0.7 }, { eta_s = 0.8 }, { eta_s = 0.9 }]

[optimize]
free = ["phi_s", "delta_a", "kappa1", "kappa2", "gamma_tm", "tau_p"]
starts = 4
warm_start = { phi_s = 0.0, delta_a = 1e6, kappa1 = 8.6e5, kappa2 = 8e5, gamma_tm = 1.8e5, tau_p = 1.56e-5 }
"#;

fn ratio_plot(title: &'static str, x: &'static str, x_label: &'static str) -> PlotSpec {
    PlotSpec {
        title,
        x,
        y: "ratio",
        x_label,
        y_label: "C_eff / C_qu",
        log_x: true,
        log_y: false,
        series: &["eta_s"],
        overlay: None,
        hline: None,
    }
}

fn cooling_plot(title: &'static str, series: &'static [&'static str], overlay: Option<&'static str>) -> PlotSpec {
    PlotSpec {
        title,
        x: "n_cav",
        y: "n_phn",
        x_label: "intracavity photons",
        y_label: "phonon number",
        log_x: true,
        log_y: true,
        series,
        overlay,
        hline: None,
    }
}

fn epr_plot(title: &'static str) -> PlotSpec {
    PlotSpec {
        title,
        x: "n_cav",
        y: "delta_epr",
        x_label: "intracavity photons",
        y_label: "EPR variance",
        log_x: true,
        log_y: false,
        series: &["eta_s"],
        overlay: None,
        hline: Some(2.0),
    }
}

pub fn all() -> Vec<Preset> {
    vec![
        Preset {
            name: "fig2a",
            config: FIG2A,
            plot: ratio_plot("cooperativity gain", "C_qu", "quantum cooperativity"),
        },
        Preset {
            name: "fig2b",
            config: FIG2B,
            plot: ratio_plot("cooperativity gain", "kappa1_hz", "kappa1 / 2pi (Hz)"),
        },
        Preset {
            name: "fig3a",
            config: FIG3A,
            plot: cooling_plot("optimized cooling, fixed kappa1", &["eta_s"], Some("n_sideband")),
        },
        Preset {
            name: "fig3b",
            config: FIG3B,
            plot: cooling_plot("optimized cooling, free kappa1", &["eta_s"], Some("n_sideband")),
        },
        Preset {
            name: "fig4a",
            config: FIG4A,
            plot: cooling_plot("cooling with path delay", &["eta_s", "delay_s"], None),
        },
        Preset {
            name: "fig4b",
            config: FIG4B,
            plot: cooling_plot("mirror feedback", &["eta_s"], None),
        },
        Preset {
            name: "fig7a",
            config: FIG7A,
            plot: epr_plot("entanglement, Q = 2e7"),
        },
        Preset {
            name: "fig7b",
            config: FIG7B,
            plot: epr_plot("entanglement, Q = 1e8"),
        },
    ]
}

pub fn find(name: &str) -> Option<Preset> {
    all().into_iter().find(|p| p.name == name)
}

pub fn names() -> Vec<&'static str> {
    all().iter().map(|p| p.name).collect()
}
