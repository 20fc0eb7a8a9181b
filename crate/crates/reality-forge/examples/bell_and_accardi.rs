//! Which pair-correlation statistics admit a single classical probability
//! space? The Bell-Wigner sum and the Accardi-Fedullo triangle condition,
//! cross-checked against an explicit Kolmogorov feasibility LP.
//!
//! Run with: cargo run --example bell_and_accardi

use reality_forge::probcheck::{
    accardi_fedullo_classical, bell_sum, kolmogorov_feasible, DichotomicTriple, ObservableFamily,
};

fn main() {
    // Three +-1 observables must agree in at least one pair, so the sum of
    // the three agreement probabilities is at least 1 classically. Equal
    // agreement probabilities of 1/4 push the sum to 0.75: impossible.
    let (sum, classical) = bell_sum(0.25, 0.25, 0.25).unwrap();
    println!("agreement sum {sum} -> {}", if classical { "satisfied" } else { "violated" });

    // Sweep r for fixed p = q and watch the classical window
    // |p + q - 1| <= r <= 1 - |p - q| open and close.
    let (p, q) = (0.3, 0.6);
    println!("\np = {p}, q = {q}: classical iff {:.1} <= r <= {:.1}", (p + q - 1.0f64).abs(), 1.0 - (p - q as f64).abs());
    for r10 in 0..=10u32 {
        let r = r10 as f64 / 10.0;
        let triple = DichotomicTriple::new(p, q, r).unwrap();
        let closed_form = accardi_fedullo_classical(&triple);
        let (lp, measure) = kolmogorov_feasible(&ObservableFamily::from_triple(&triple)).unwrap();
        assert_eq!(closed_form, lp, "closed form and LP must agree");
        let witness = measure
            .map(|m| {
                let mass: f64 = m.iter().sum();
                format!("joint measure with mass {mass:.3}")
            })
            .unwrap_or_else(|| "no joint measure exists".to_string());
        println!(
            "  r = {r:.1}  {}  ({witness})",
            if closed_form { "classical   " } else { "nonclassical" },
        );
    }
}
