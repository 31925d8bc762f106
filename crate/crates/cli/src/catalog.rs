//! Description of the field catalog for `raystab catalog`.

use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct Param {
    pub name: &'static str,
    pub kind: &'static str,
    pub default: Option<&'static str>,
    pub meaning: &'static str,
}

#[derive(Debug, Clone, Serialize)]
pub struct KindEntry {
    pub kind: &'static str,
    pub velocity: &'static str,
    pub default_domain: &'static str,
    /// Whether `steady_euler = true` is accepted.
    pub steady_euler_available: bool,
    pub steady_euler_default: bool,
    pub params: Vec<Param>,
}

fn p(
    name: &'static str,
    kind: &'static str,
    default: Option<&'static str>,
    meaning: &'static str,
) -> Param {
    Param {
        name,
        kind,
        default,
        meaning,
    }
}

pub fn catalog() -> Vec<KindEntry> {
    vec![
        KindEntry {
            kind: "rotation",
            velocity: "u = (-x2, x1, 0)",
            default_domain: "free cube [-4, 4]^3",
            steady_euler_available: true,
            steady_euler_default: true,
            params: vec![],
        },
        KindEntry {
            kind: "strain",
            velocity: "u = (l1 x1, l2 x2, l3 x3), l1 + l2 + l3 = 0",
            default_domain: "free cube [-4, 4]^3",
            steady_euler_available: true,
            steady_euler_default: true,
            params: vec![p(
                "lambda",
                "float[3]",
                None,
                "strain eigenvalues, summing to zero",
            )],
        },
        KindEntry {
            kind: "shear",
            velocity: "u = (a sin x2, 0, 0)",
            default_domain: "torus [0, 2pi)^3",
            steady_euler_available: true,
            steady_euler_default: true,
            params: vec![p("a", "float", Some("1.0"), "shear amplitude")],
        },
        KindEntry {
            kind: "abc",
            velocity: "u = (A sin x3 + C cos x2, B sin x1 + A cos x3, C sin x2 + B cos x1)",
            default_domain: "torus [0, 2pi)^3",
            steady_euler_available: true,
            steady_euler_default: true,
            params: vec![
                p("a", "float", Some("1.0"), "coefficient A"),
                p("b", "float", Some("1.0"), "coefficient B"),
                p("c", "float", Some("1.0"), "coefficient C"),
            ],
        },
        KindEntry {
            kind: "trig_poly",
            velocity: "u = sum over modes of amp e^{i(k.x - freq t)}, real and solenoidal",
            default_domain: "torus [0, 2pi)^3",
            steady_euler_available: false,
            steady_euler_default: false,
            params: vec![
                p(
                    "modes",
                    "table[]",
                    None,
                    "explicit modes {k, amp_re, amp_im, freq}, each with its conjugate partner",
                ),
                p(
                    "random.rng_seed",
                    "integer",
                    None,
                    "seed of a generated field",
                ),
                p(
                    "random.n_pairs",
                    "integer",
                    Some("3"),
                    "conjugate mode pairs",
                ),
                p(
                    "random.kmax",
                    "integer",
                    Some("2"),
                    "largest wavevector component",
                ),
                p(
                    "random.rms_speed",
                    "float",
                    Some("1.0"),
                    "spatial rms of |u|",
                ),
            ],
        },
    ]
}

pub fn render_text(entries: &[KindEntry]) -> String {
    let mut s = String::new();
    for e in entries {
        s.push_str(&format!("{}\n", e.kind));
        s.push_str(&format!("  velocity      {}\n", e.velocity));
        s.push_str(&format!("  domain        {}\n", e.default_domain));
        let steady = if e.steady_euler_available {
            format!("available (default {})", e.steady_euler_default)
        } else {
            "not available".to_string()
        };
        s.push_str(&format!("  steady_euler  {steady}\n"));
        if e.params.is_empty() {
            s.push_str("  params        none\n");
        }
        for p in &e.params {
            let d = p
                .default
                .map_or("required".to_string(), |d| format!("default {d}"));
            s.push_str(&format!(
                "  param         {} ({}, {}): {}\n",
                p.name, p.kind, d, p.meaning
            ));
        }
    }
    s
}
