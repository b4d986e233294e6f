//! Fits k1 and k3 to the reference cycles for a range of fixed exponents.

use ecotruck::aging::{calibrate, fading_rate, CycleStats, REFERENCE_ROWS};

fn main() {
    for k2 in [3.0, 4.0, 5.0, 6.0, 8.0] {
        let k = match calibrate(&REFERENCE_ROWS, k2, k2) {
            Ok(k) => k,
            Err(e) => {
                println!("k2 = k4 = {k2}: {e}");
                continue;
            }
        };
        let fit: Vec<String> = REFERENCE_ROWS
            .iter()
            .map(|r| {
                let s = CycleStats { soc_avg: r.soc_avg, soc_dev: r.soc_dev, q_processed: 1.0 };
                format!("{:.4e} (target {:.2e})", fading_rate(&s, &k), r.rate)
            })
            .collect();
        println!("k2 = k4 = {k2}: k1 = {:.4e}, k3 = {:.4e}; rates {}", k.k1, k.k3, fit.join(", "));
    }
}
