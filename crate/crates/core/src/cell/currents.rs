//! Membrane currents and their auxiliary quantities. Potentials in mV,
//! concentrations in mmol/L, currents in µA/µF, fluxes in mmol/(L·ms).

use super::{CellParams, CellState};

pub const NAO: f64 = 140.0;
pub const KO: f64 = 4.5;
pub const CAO: f64 = 1.8;

pub const R_GAS: f64 = 8314.0;
pub const FARADAY: f64 = 96485.0;
pub const TEMP: f64 = 310.0;
/// RT/F in mV.
pub const RTF: f64 = R_GAS * TEMP / FARADAY;
/// F/(RT) in mV⁻¹.
pub const FRT: f64 = FARADAY / (R_GAS * TEMP);

pub const CELL_LENGTH: f64 = 0.01;
pub const CELL_RADIUS: f64 = 0.0011;
pub const V_CELL: f64 = 3.801e-5;
pub const A_GEO: f64 = 2.0 * std::f64::consts::PI * CELL_RADIUS * CELL_RADIUS
    + 2.0 * std::f64::consts::PI * CELL_RADIUS * CELL_LENGTH;
pub const A_CAP: f64 = 2.0 * A_GEO;
pub const V_MYO: f64 = 2.58468e-5;
pub const V_NSR: f64 = 0.0552 * V_CELL;
pub const V_JSR: f64 = 0.0048 * V_CELL;

const PR_NAK: f64 = 0.01833;
const KM_CA: f64 = 0.0006;
const P_CA: f64 = 5.4e-4;
const P_NA: f64 = 6.75e-7;
const P_K: f64 = 1.93e-7;
const P_NSCA: f64 = 1.75e-7;
const GAMMA_NACA: f64 = 0.15;
const G_CAT: f64 = 0.05;

pub const TRPN_MAX: f64 = 0.07;
pub const KM_TRPN: f64 = 0.0005;
pub const CMDN_MAX: f64 = 0.05;
pub const KM_CMDN: f64 = 0.00238;
pub const CSQN_MAX: f64 = 10.0;
pub const KM_CSQN: f64 = 0.8;

/// `x / (eˣ − 1)`, continuous through `x = 0`.
#[inline]
pub fn x_over_expm1(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0 - 0.5 * x
    } else {
        x / x.exp_m1()
    }
}

/// `x / (1 − e^{−a x})`, continuous through `x = 0`.
#[inline]
fn x_over_one_minus_exp(x: f64, a: f64) -> f64 {
    x_over_expm1(-a * x) / a
}

/// `x / (e^{a x} − 1)`, continuous through `x = 0`.
#[inline]
fn x_over_exp_minus_one(x: f64, a: f64) -> f64 {
    x_over_expm1(a * x) / a
}

/// Constant-field flux `P z² (V F²/RT) (γi ci e^{zVF/RT} − γo co)/(e^{zVF/RT} − 1)`.
#[inline]
fn ghk(p: f64, z: f64, vm: f64, gi: f64, ci: f64, go: f64, co: f64) -> f64 {
    let x = z * vm * FRT;
    // V F²/RT / (e^x − 1) = (F/z) · x/(e^x − 1)
    p * z * z * (FARADAY / z) * x_over_expm1(x) * (gi * ci * x.exp() - go * co)
}

/// Instantaneous and gated quantities at the current state.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Currents {
    pub ina: f64,
    pub inak: f64,
    pub iks: f64,
    pub ikr: f64,
    pub ik1: f64,
    pub ikp: f64,
    pub ilca: f64,
    pub ilcak: f64,
    pub ilcana: f64,
    pub icat: f64,
    pub inaca: f64,
    pub insna: f64,
    pub ikns: f64,
    pub ipca: f64,
    pub icab: f64,
    pub inab: f64,
    pub ito: f64,
    pub irel: f64,
    pub iup: f64,
    pub ileak: f64,
    pub itr: f64,
}

impl Currents {
    /// Sum of calcium currents entering the myoplasm balance.
    pub fn itca(&self) -> f64 {
        self.ilca + self.icab + self.ipca - 2.0 * self.inaca + self.icat
    }

    pub fn itna(&self) -> f64 {
        self.ina + self.inab + self.ilcana + self.insna + 3.0 * self.inak + 3.0 * self.inaca
    }

    pub fn itk(&self) -> f64 {
        self.ikr + self.iks + self.ik1 + self.ikp + self.ilcak + self.ikns - 2.0 * self.inak + self.ito
    }

    pub fn ical(&self) -> f64 {
        self.ilca + self.ilcak + self.ilcana
    }

    /// Total transmembrane current; `dVm/dt = −total`.
    pub fn total(&self) -> f64 {
        self.ikr
            + self.iks
            + self.ik1
            + self.ikp
            + self.ilcak
            + self.ikns
            - 2.0 * self.inak
            + self.ina
            + self.inab
            + self.ilcana
            + self.insna
            + 3.0 * self.inak
            + 3.0 * self.inaca
            + self.ilca
            + self.icab
            + self.ipca
            - 2.0 * self.inaca
            + self.icat
    }
}

pub fn nernst(co: f64, ci: f64) -> f64 {
    RTF * (co / ci).ln()
}

pub fn e_na(nai: f64) -> f64 {
    nernst(NAO, nai)
}

pub fn e_k(ki: f64) -> f64 {
    nernst(KO, ki)
}

pub fn e_ca(cai: f64) -> f64 {
    RTF / 2.0 * (CAO / cai).ln()
}

pub fn e_ks(ki: f64) -> f64 {
    RTF * ((4.5 + PR_NAK * 150.0) / (ki + PR_NAK * NAO)).ln()
}

pub fn sigma_nak() -> f64 {
    ((NAO / 67.3).exp() - 1.0) / 7.0
}

pub fn f_nak(vm: f64) -> f64 {
    1.0 / (1.0 + 0.1245 * (-0.1 * vm * FRT).exp() + 0.0365 * sigma_nak() * (-vm * FRT).exp())
}

pub fn i_nak(vm: f64, nai: f64) -> f64 {
    1.5 * f_nak(vm) / (1.0 + (10.0 / nai).powf(1.5)) * KO / (KO + 1.5)
}

pub fn g_ks(cai: f64) -> f64 {
    0.433 * (1.0 + 0.6 / (1.0 + (0.000038 / cai).powf(1.4))) * 0.615
}

pub fn i_k1(vm: f64, ki: f64) -> f64 {
    let ek1 = e_k(ki);
    let g = 0.75 * (KO / 5.4).sqrt();
    let a = 1.02 / (1.0 + (0.2385 * (vm - ek1 - 59.215)).exp());
    let b = (0.49124 * (0.08032 * (vm - ek1 + 5.476)).exp() + (0.06175 * (vm - ek1 - 594.31)).exp())
        / (1.0 + (-0.5143 * (vm - ek1 + 4.753)).exp());
    g * a / (a + b) * (vm - ek1)
}

pub fn i_kp(vm: f64, ki: f64) -> f64 {
    let kp = 1.0 / (1.0 + ((7.488 - vm) / 5.98).exp());
    0.00552 * kp * (vm - e_k(ki))
}

pub fn i_naca(vm: f64, nai: f64, cai: f64) -> f64 {
    let e1 = ((GAMMA_NACA - 1.0) * vm * FRT).exp();
    let e2 = (vm * FRT).exp();
    let n3 = nai * nai * nai;
    let no3 = NAO * NAO * NAO;
    2.5e-4 * e1 * (e2 * n3 * CAO - no3 * cai) / (1.0 + 1e-4 * e1 * (e2 * n3 * CAO + no3 * cai))
}

/// Steady states and time constants of the gated currents.
pub mod gates {
    use super::{x_over_exp_minus_one, x_over_one_minus_exp};

    pub fn xs1_inf(vm: f64) -> f64 {
        1.0 / (1.0 + (-(vm - 1.5) / 16.7).exp())
    }

    pub fn tau_xs1(vm: f64) -> f64 {
        let x = vm + 30.0;
        1.0 / (0.0000719 * x_over_one_minus_exp(x, 0.148) + 0.000131 * x_over_exp_minus_one(x, 0.0687))
    }

    pub fn tau_xs2(vm: f64) -> f64 {
        4.0 * tau_xs1(vm)
    }

    pub fn xr_inf(vm: f64) -> f64 {
        1.0 / (1.0 + (-(vm + 21.5) / 7.5).exp())
    }

    pub fn tau_xr(vm: f64) -> f64 {
        1.0 / (0.00138 * x_over_one_minus_exp(vm + 14.2, 0.123)
            + 0.00061 * x_over_exp_minus_one(vm + 38.9, 0.145))
    }

    pub fn d_inf(vm: f64) -> f64 {
        1.0 / (1.0 + (-(vm + 10.0) / 6.24).exp())
    }

    pub fn tau_d(vm: f64) -> f64 {
        // (1 − e^{−x/6.24}) / (0.035 x)
        let x = vm + 10.0;
        d_inf(vm) / (0.035 * x_over_one_minus_exp(x, 1.0 / 6.24))
    }

    pub fn f_inf(vm: f64) -> f64 {
        1.0 / (1.0 + ((vm + 32.0) / 8.0).exp()) + 0.6 / (1.0 + ((50.0 - vm) / 20.0).exp())
    }

    pub fn tau_f(vm: f64) -> f64 {
        1.0 / (0.0197 * (-(0.0337 * (vm + 10.0)).powi(2)).exp() + 0.02)
    }

    pub fn b_inf(vm: f64) -> f64 {
        1.0 / (1.0 + (-(vm + 14.0) / 10.8).exp())
    }

    pub fn tau_b(vm: f64) -> f64 {
        3.7 + 6.1 / (1.0 + ((vm + 25.0) / 4.5).exp())
    }

    pub fn g_inf(vm: f64) -> f64 {
        1.0 / (1.0 + ((vm + 60.0) / 5.6).exp())
    }

    pub fn tau_g(vm: f64) -> f64 {
        if vm <= 0.0 {
            -0.875 * vm + 12.0
        } else {
            12.0
        }
    }
}

pub fn ryr_open(tc: f64) -> f64 {
    1.0 / (1.0 + ((-tc + 4.0) / 0.5).exp())
}

pub fn ryr_close(tc: f64) -> f64 {
    1.0 - 1.0 / (1.0 + ((-tc + 4.0) / 0.5).exp())
}

pub fn g_rel(itca: f64) -> f64 {
    150.0 / (1.0 + (itca + 5.0).exp() / 0.9)
}

pub fn trpn(cai: f64) -> f64 {
    TRPN_MAX * cai / (cai + KM_TRPN)
}

pub fn cmdn(cai: f64) -> f64 {
    CMDN_MAX * cai / (cai + KM_CMDN)
}

pub fn csqn(cajsr: f64) -> f64 {
    CSQN_MAX * (cajsr / (cajsr + KM_CSQN))
}

/// Free myoplasmic calcium given total (free plus troponin- and
/// calmodulin-bound) calcium, as the largest root of the buffer cubic.
pub fn free_cai(total: f64) -> f64 {
    let b = CMDN_MAX + TRPN_MAX - total + KM_TRPN + KM_CMDN;
    let c = KM_CMDN * KM_TRPN - total * (KM_TRPN + KM_CMDN) + TRPN_MAX * KM_CMDN + CMDN_MAX * KM_TRPN;
    let d = -KM_TRPN * KM_CMDN * total;
    let q = b * b - 3.0 * c;
    let fab = q.sqrt();
    let theta = ((9.0 * b * c - 2.0 * b * b * b - 27.0 * d) / (2.0 * q.powf(1.5))).acos();
    2.0 / 3.0 * fab * (theta / 3.0).cos() - b / 3.0
}

/// Free JSR calcium given total (free plus calsequestrin-bound) calcium.
pub fn free_cajsr(total: f64) -> f64 {
    let b = CSQN_MAX - total + KM_CSQN;
    let c = KM_CSQN * total;
    ((b * b + 4.0 * c).sqrt() - b) / 2.0
}

/// All currents at state `s`.
pub fn compute_currents(s: &CellState, p: &CellParams) -> Currents {
    let vm = s.vm;
    let g = &s.gates;
    let ena = e_na(s.nai);

    let fca = 1.0 / (1.0 + s.cai / KM_CA);
    let dff = g.d * g.f * fca;
    let ibarca = ghk(P_CA, 2.0, vm, 1.0, s.cai, 0.341, CAO);
    let ibarna = ghk(P_NA, 1.0, vm, 0.75, s.nai, 0.75, NAO);
    let ibark = ghk(P_K, 1.0, vm, 0.75, s.ki, 0.75, KO);

    let ns_gate = 1.0 / (1.0 + (0.0012 / s.cai).powi(3));
    let insk = ghk(P_NSCA, 1.0, vm, 0.75, s.ki, 0.75, KO);
    let insna = ghk(P_NSCA, 1.0, vm, 0.75, s.nai, 0.75, NAO);

    let ekr = e_k(s.ki);
    let rect = 1.0 / (1.0 + ((vm + 9.0) / 22.4).exp());

    let mut c = Currents {
        ina: p.gna * (vm - ena) * s.mc.0[0],
        inak: i_nak(vm, s.nai),
        iks: g_ks(s.cai) * g.xs1 * g.xs2 * (vm - e_ks(s.ki)),
        ikr: 0.02614 * (KO / 5.4).sqrt() * g.xr * rect * (vm - ekr),
        ik1: i_k1(vm, s.ki),
        ikp: i_kp(vm, s.ki),
        ilca: dff * ibarca,
        ilcak: dff * ibark,
        ilcana: dff * ibarna,
        icat: G_CAT * g.b * g.b * g.g * (vm - e_ca(s.cai)),
        inaca: i_naca(vm, s.nai, s.cai),
        insna: insna * ns_gate,
        ikns: insk * ns_gate,
        ipca: 1.15 * s.cai / (0.0005 + s.cai),
        icab: 0.003016 * (vm - e_ca(s.cai)),
        inab: 0.00141 * (vm - ena),
        ito: (p.ito)(s),
        irel: 0.0,
        iup: 0.00875 * s.cai / (s.cai + 0.00092),
        ileak: 0.005 / 15.0 * s.cansr,
        itr: (s.cansr - s.cajsr) / 180.0,
    };
    let tc = s.cicr.tc;
    c.irel = g_rel(c.itca()) * ryr_open(tc) * ryr_close(tc) * (s.cajsr - s.cai);
    c
}
