//! LaTeX rendering of modes, combinations and OPE expansions, in the
//! notation of the source material (tilde and doubly-tilde W currents,
//! `G^{q\pm}`, hatted topological generators).

use crate::arith::{HalfInt, Rational};
use crate::ope::OpeExpansion;
use crate::structure::{Family, GeneratorLabel, GeneratorMode, ModeCombination};

pub fn rational(r: &Rational) -> String {
    if r.is_integer() {
        format!("{}", r.numer())
    } else if r.is_negative() {
        format!("-\\frac{{{}}}{{{}}}", -r.numer(), r.denom())
    } else {
        format!("\\frac{{{}}}{{{}}}", r.numer(), r.denom())
    }
}

pub fn halfint(h: &HalfInt) -> String {
    rational(&h.to_rational())
}

fn family_symbol(family: Family) -> &'static str {
    match family {
        Family::H => "H",
        Family::W => "w",
        Family::WTilde => "\\widetilde{W}",
        Family::WTilde2 => "\\widetilde{\\widetilde{W}}",
        Family::GPlus => "G",
        Family::GMinus => "G",
        Family::VHat => "\\hat{V}",
    }
}

pub fn label(l: &GeneratorLabel) -> String {
    let base = family_symbol(l.family);
    let mut upper = halfint(&l.q);
    if let Some(s) = &l.s {
        upper = format!("{upper},{}", halfint(s));
    }
    match l.family {
        Family::GPlus => format!("{base}^{{{upper}\\,+}}"),
        Family::GMinus => format!("{base}^{{{upper}\\,-}}"),
        _ => format!("{base}^{{{upper}}}"),
    }
}

pub fn mode(m: &GeneratorMode) -> String {
    format!("{}_{{{}}}", label(&m.label), halfint(&m.m))
}

pub fn combination(c: &ModeCombination) -> String {
    if c.is_empty() {
        return "0".to_string();
    }
    let mut out = String::new();
    for (i, (m, coeff)) in c.iter().enumerate() {
        let coeff_tex = rational(coeff);
        if i == 0 {
            out.push_str(&coeff_tex);
        } else if coeff.is_negative() {
            out.push_str(&format!(" {}", coeff_tex));
        } else {
            out.push_str(&format!(" + {}", coeff_tex));
        }
        out.push_str("\\,");
        out.push_str(&mode(m));
    }
    out
}

pub fn expansion(e: &OpeExpansion<Rational>) -> String {
    if e.is_empty() {
        return "0".to_string();
    }
    let mut parts = Vec::new();
    for t in e.terms() {
        let mut num = rational(&t.coeff);
        if t.dbar > 0 {
            let op = if t.dbar == 1 {
                "\\bar\\partial".to_string()
            } else {
                format!("\\bar\\partial^{{{}}}", t.dbar)
            };
            num.push_str(&format!("\\,{op}"));
        }
        num.push_str(&format!(" {}(w,\\bar w)", label(&t.target)));
        let mut den = String::new();
        if t.hol_pole == 1 {
            den.push_str("(z-w)");
        } else if t.hol_pole > 1 {
            den.push_str(&format!("(z-w)^{{{}}}", t.hol_pole));
        }
        if t.antihol_pole == 1 {
            den.push_str("(\\bar z-\\bar w)");
        } else if t.antihol_pole > 1 {
            den.push_str(&format!("(\\bar z-\\bar w)^{{{}}}", t.antihol_pole));
        } else if t.antihol_pole < 0 {
            num = format!("(\\bar z-\\bar w)^{{{}}}\\,{num}", -t.antihol_pole);
        }
        if den.is_empty() {
            parts.push(num);
        } else {
            parts.push(format!("\\frac{{{num}}}{{{den}}}"));
        }
    }
    parts.join(" + ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::structure::{CouplingRegistry, GeneratorLabel};

    #[test]
    fn renders_modes_in_source_notation() {
        let l = GeneratorLabel::wtilde(HalfInt::int(2), HalfInt::int(2)).unwrap();
        let m = GeneratorMode::new(l, HalfInt::int(1)).unwrap();
        assert_eq!(mode(&m), "\\widetilde{W}^{2,2}_{1}");
        let g = GeneratorLabel::new(Family::GMinus, HalfInt::halves(3), None).unwrap();
        let gm = GeneratorMode::new(g, HalfInt::halves(-1)).unwrap();
        assert_eq!(mode(&gm), "G^{\\frac{3}{2}\\,-}_{-\\frac{1}{2}}");
    }

    #[test]
    fn renders_bracket_combination() {
        let reg = CouplingRegistry::unit();
        let l = GeneratorLabel::wtilde(HalfInt::int(2), HalfInt::int(2)).unwrap();
        let a = GeneratorMode::new(l.clone(), HalfInt::int(1)).unwrap();
        let b = GeneratorMode::new(l, HalfInt::int(-1)).unwrap();
        let result = crate::structure::wtilde_bracket(&a, &b, &reg).unwrap();
        let tex = combination(&result.combination);
        assert!(tex.contains("\\widetilde{W}^{2,2}_{0}"));
        assert!(tex.contains("\\widetilde{W}^{1,1}_{0}"));
    }

    #[test]
    fn renders_ope_with_poles_and_derivatives() {
        let reg = CouplingRegistry::unit();
        let t = crate::ope::build_wtilde_ope(
            &HalfInt::int(2),
            &HalfInt::int(2),
            &HalfInt::int(2),
            &HalfInt::int(2),
            &reg,
        )
        .unwrap();
        let tex = expansion(&crate::ope::canonicalize(&t));
        assert!(tex.contains("\\bar\\partial"));
        assert!(tex.contains("(\\bar z-\\bar w)^{2}"));
    }
}
