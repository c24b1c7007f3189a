//! Exhaustive threshold enumeration over plain score lists.

use fvmf_core::rng::SeededRng;

pub const TOP: f64 = 1.0 + f64::EPSILON;

pub fn far(imp: &[f64], t: f64) -> f64 {
    let mut n = 0usize;
    for &s in imp {
        if s >= t {
            n += 1;
        }
    }
    n as f64 / imp.len() as f64
}

pub fn frr(gen: &[f64], t: f64) -> f64 {
    let mut n = 0usize;
    for &s in gen {
        if s < t {
            n += 1;
        }
    }
    n as f64 / gen.len() as f64
}

/// Every impostor score plus the top sentinel, scanned without assuming order.
fn best(imp: &[Vec<f64>], ok: impl Fn(f64) -> bool) -> f64 {
    let mut best = TOP;
    for &c in imp.iter().flatten() {
        if ok(c) && c < best {
            best = c;
        }
    }
    best
}

pub fn pooled(lists: &[Vec<f64>]) -> Vec<f64> {
    lists.iter().flatten().copied().collect()
}

pub fn global_threshold(imp: &[Vec<f64>], alpha: f64) -> f64 {
    let all = pooled(imp);
    best(imp, |t| far(&all, t) <= alpha)
}

pub fn group_threshold(imp: &[Vec<f64>], alpha: f64) -> f64 {
    best(imp, |t| imp.iter().all(|l| far(l, t) <= alpha))
}

/// `(value, kind)` with kind 0 finite, 1 infinite, 2 degenerate.
pub fn ratio(num: f64, den: f64) -> (f64, u8) {
    if den == 0.0 {
        if num == 0.0 {
            (1.0, 2)
        } else {
            (f64::INFINITY, 1)
        }
    } else {
        (num / den, 0)
    }
}

#[derive(Debug, PartialEq)]
pub struct Expected {
    pub global_t: f64,
    pub global_far: f64,
    pub group_t: f64,
    pub far: [f64; 2],
    pub frr: [f64; 2],
    pub frr_at_far: f64,
    pub gap: f64,
    pub bfrr: (f64, u8),
    pub bfar: (f64, u8),
    pub far_ratio: (f64, u8),
    pub frr_ratio: (f64, u8),
}

pub fn expected(gen: &[Vec<f64>], imp: &[Vec<f64>], alpha: f64) -> Expected {
    let (all_gen, all_imp) = (pooled(gen), pooled(imp));
    let global_t = global_threshold(imp, alpha);
    let t = group_threshold(imp, alpha);
    let far = [far(&imp[0], t), far(&imp[1], t)];
    let frr = [frr(&gen[0], t), frr(&gen[1], t)];
    let hi_lo = |v: [f64; 2]| if v[0] >= v[1] { (v[0], v[1]) } else { (v[1], v[0]) };
    let (a, b) = hi_lo(frr);
    let (c, d) = hi_lo(far);
    Expected {
        global_t,
        global_far: self::far(&all_imp, global_t),
        group_t: t,
        far,
        frr,
        frr_at_far: self::frr(&all_gen, global_t),
        gap: (self::frr(&gen[1], global_t) - self::frr(&gen[0], global_t)).abs(),
        bfrr: ratio(a, b),
        bfar: ratio(c, d),
        far_ratio: ratio(far[1], far[0]),
        frr_ratio: ratio(frr[1], frr[0]),
    }
}

/// Scores on a coarse lattice so ties are frequent.
pub fn micro_lists(rng: &mut SeededRng) -> Vec<Vec<f64>> {
    (0..2)
        .map(|_| {
            let n = 1 + rng.below(12) as usize;
            (0..n).map(|_| rng.below(17) as f64 / 8.0 - 1.0).collect()
        })
        .collect()
}

pub fn micro_alpha(rng: &mut SeededRng) -> f64 {
    const FIXED: [f64; 7] = [0.0, 0.05, 0.1, 0.25, 1.0 / 3.0, 0.5, 1.0];
    if rng.below(2) == 0 {
        FIXED[rng.below(FIXED.len() as u64) as usize]
    } else {
        rng.uniform()
    }
}

fn kind(r: fvmf_core::metrics::Ratio) -> (f64, u8) {
    use fvmf_core::metrics::RatioKind;
    let k = match r.kind {
        RatioKind::Finite => 0,
        RatioKind::Infinite => 1,
        RatioKind::Degenerate => 2,
    };
    (r.value, k)
}

/// Runs every metric operation on one score set and compares it with the
/// enumeration above, bit for bit.
pub fn check(gen: &[Vec<f64>], imp: &[Vec<f64>], alpha: f64) -> Result<(), String> {
    use fvmf_core::metrics as m;
    let scores = m::PairScores::new(gen.to_vec(), imp.to_vec()).map_err(|e| e.to_string())?;
    let want = expected(gen, imp, alpha);

    let global = m::threshold_at_global_far(&scores, alpha).unwrap();
    let group = m::threshold_at_max_group_far(&scores, alpha).unwrap();
    let report = m::fairness_report(&scores, alpha).unwrap();
    let got = Expected {
        global_t: global.threshold,
        global_far: global.far,
        group_t: group.threshold,
        far: report.far,
        frr: report.frr,
        frr_at_far: m::frr_at_far(&scores, alpha).unwrap(),
        gap: m::eq2_gap(&scores, alpha).unwrap(),
        bfrr: kind(report.bfrr),
        bfar: kind(report.bfar),
        far_ratio: kind(report.far_ratio),
        frr_ratio: kind(report.frr_ratio),
    };
    if got != want {
        return Err(format!("report mismatch: {got:?} vs {want:?}"));
    }
    if report.threshold != want.group_t || report.frr_at_far != want.frr_at_far || group.far_by_group != want.far.to_vec() {
        return Err("report fields disagree with threshold operations".into());
    }

    let mut ts: Vec<f64> = gen.iter().chain(imp).flatten().copied().collect();
    ts.push(TOP);
    ts.push(-2.0);
    for &t in &ts {
        for g in 0..2 {
            let (fa, fr) = (far(&imp[g], t), frr(&gen[g], t));
            if m::far(&imp[g], t).unwrap() != fa || m::frr(&gen[g], t).unwrap() != fr {
                return Err(format!("rate mismatch at t={t}, group {g}"));
            }
            if scores.group_far(g, t) != fa || scores.group_frr(g, t) != fr {
                return Err(format!("sorted rate mismatch at t={t}, group {g}"));
            }
        }
        if scores.pooled_far(t) != far(&pooled(imp), t) || scores.pooled_frr(t) != frr(&pooled(gen), t) {
            return Err(format!("pooled rate mismatch at t={t}"));
        }
    }

    let curve = m::metric_curves(&scores, None).unwrap();
    let mut distinct: Vec<f64> = gen.iter().chain(imp).flatten().copied().collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let want_curve: Vec<(f64, usize, f64, f64)> = (0..2)
        .flat_map(|g| distinct.iter().map(move |&t| (t, g, far(&imp[g], t), frr(&gen[g], t))))
        .collect();
    let got_curve: Vec<(f64, usize, f64, f64)> = curve.iter().map(|p| (p.t, p.group, p.far, p.frr)).collect();
    if got_curve != want_curve {
        return Err("curve mismatch".into());
    }
    Ok(())
}
