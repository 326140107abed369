//! Concrete chains: worked examples, reduction gadgets and the M(n) family.
//!
//! Probabilities are assembled as exact rationals and rounded to `f64` once.

use num_rational::Rational64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bisim::exact_quotient;
use crate::error::{Error, Result};
use crate::lmc::{l1_distance, lump, LabelledMarkovChain, Partition, SparseDistribution};
use crate::witness::l1_chebyshev_centre;

type Q = Rational64;

fn q(n: i64, d: i64) -> Q {
    Q::new(n, d)
}

/// Closest small rational to a user-supplied ε.
pub fn rational(x: f64) -> Q {
    Q::approximate_float(x).unwrap_or_else(|| panic!("{x} has no rational approximation"))
}

fn to_f64(r: Q) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

#[derive(Default)]
struct RatChain {
    names: Vec<String>,
    labels: Vec<String>,
    edges: Vec<Vec<(String, Q)>>,
}

impl RatChain {
    fn state(&mut self, name: &str, label: &str) -> &mut Self {
        self.names.push(name.into());
        self.labels.push(label.into());
        self.edges.push(Vec::new());
        self
    }

    fn edge(&mut self, from: &str, to: &str, p: Q) -> &mut Self {
        let s = self.names.iter().position(|n| n == from).expect("known state");
        self.edges[s].push((to.into(), p));
        self
    }

    fn build(&self) -> LabelledMarkovChain {
        let mut b = crate::lmc::ChainBuilder::new();
        for (n, l) in self.names.iter().zip(&self.labels) {
            b.state(n, l);
        }
        for (s, es) in self.edges.iter().enumerate() {
            let total: Q = es.iter().map(|e| e.1).sum();
            assert_eq!(total, q(1, 1), "row {} sums to {total}", self.names[s]);
            // Merge repeated targets before rounding.
            let mut merged: Vec<(String, Q)> = Vec::new();
            for (t, p) in es {
                match merged.iter_mut().find(|e| &e.0 == t) {
                    Some(e) => e.1 += *p,
                    None => merged.push((t.clone(), *p)),
                }
            }
            for (t, p) in merged {
                assert!(p >= q(0, 1), "negative probability in row {}", self.names[s]);
                b.edge(&self.names[s], &t, to_f64(p));
            }
        }
        b.build().expect("fixture is a valid chain")
    }
}

/// Two copies of a two-state loop, one skewed by ε.
pub fn fig1(eps: f64) -> LabelledMarkovChain {
    let e = rational(eps);
    let h = q(1, 2);
    let mut c = RatChain::default();
    c.state("s1", "white").state("s2", "green").state("t1", "white").state("t2", "green");
    c.edge("s1", "s1", h).edge("s1", "s2", h);
    c.edge("s2", "s2", h).edge("s2", "s1", h);
    c.edge("t1", "t1", h + e).edge("t1", "t2", h - e);
    c.edge("t2", "t2", h + e).edge("t2", "t1", h - e);
    c.build()
}

/// s₁ ∼ε s₃ ∼ε s₂ but not s₁ ∼ε s₂.
pub fn fig4(eps: f64) -> LabelledMarkovChain {
    let e = rational(eps);
    let mut c = RatChain::default();
    c.state("s1", "white").state("s2", "white").state("s3", "white").state("x", "green");
    c.edge("s1", "s1", q(1, 2)).edge("s1", "s2", q(1, 4)).edge("s1", "x", q(1, 4));
    c.edge("s2", "s2", q(3, 4) + e * 2).edge("s2", "x", q(1, 4) - e * 2);
    c.edge("s3", "s3", q(3, 4) + e).edge("s3", "x", q(1, 4) - e);
    c.edge("x", "x", q(1, 1));
    c.build()
}

/// The order-sensitivity example.
pub fn fig8() -> LabelledMarkovChain {
    let mut c = RatChain::default();
    c.state("s1", "white").state("s2", "white").state("s3", "white").state("v", "green");
    c.edge("s1", "s3", q(1, 2)).edge("s1", "v", q(1, 2));
    c.edge("s2", "s1", q(54, 100)).edge("s2", "v", q(46, 100));
    c.edge("s3", "s3", q(46, 100)).edge("s3", "v", q(54, 100));
    c.edge("v", "v", q(1, 1));
    c.build()
}

/// t₁ ∼ε s ∼ε t ∼ε s₁; identical to the even family member with n = 1.
pub fn example5(eps: f64) -> LabelledMarkovChain {
    family_m(FamilyKind::Even, 1, eps)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FamilyKind {
    /// M(2n−1): 2n+2 states.
    Odd,
    /// M(2n): 2n+3 states.
    Even,
}

/// Largest admissible ε for family index `k` (M(k)).
pub fn family_eps_max(k: usize) -> f64 {
    let h = k.div_ceil(2) as f64;
    1.0 / ((h + 1.0) * 2f64.powf(h + 1.0))
}

/// Family member by its index `k`: M(k).
pub fn family_m_index(k: usize, eps: f64) -> LabelledMarkovChain {
    assert!(k >= 1);
    if k % 2 == 1 {
        family_m(FamilyKind::Odd, k.div_ceil(2), eps)
    } else {
        family_m(FamilyKind::Even, k / 2, eps)
    }
}

pub fn family_m(kind: FamilyKind, n: usize, eps: f64) -> LabelledMarkovChain {
    assert!(n >= 1);
    let e = rational(eps);
    let pow = |i: usize| q(1, 1i64 << (i + 1));
    let n_t = match kind {
        FamilyKind::Odd => n - 1,
        FamilyKind::Even => n,
    };
    let mut c = RatChain::default();
    c.state("s", "white").state("t", "white");
    for i in 1..=n {
        c.state(&format!("s{i}"), "white");
    }
    for i in 1..=n_t {
        c.state(&format!("t{i}"), "white");
    }
    c.state("x", "green");
    c.edge("x", "x", q(1, 1));

    // Self-loop ½+a, s_i with 1/2^{i+1}, x with 1/2^{n+1} − a.
    let s_shape = |c: &mut RatChain, u: &str, a: Q| {
        c.edge(u, u, q(1, 2) + a);
        for i in 1..=n {
            c.edge(u, &format!("s{i}"), pow(i));
        }
        c.edge(u, "x", pow(n) - a);
    };
    // Self-loop ½+b, the t-family masses, x with 1/2^{n+1} − b.
    let t_shape = |c: &mut RatChain, u: &str, b: Q| {
        c.edge(u, u, q(1, 2) + b);
        match kind {
            FamilyKind::Odd => {
                let mut rest = q(1, 2) - pow(n);
                for i in 1..n.saturating_sub(1) {
                    c.edge(u, &format!("t{i}"), pow(i));
                    rest -= pow(i);
                }
                if n >= 2 {
                    c.edge(u, &format!("t{}", n - 1), rest);
                } else {
                    c.edge(u, u, rest);
                }
            }
            FamilyKind::Even => {
                for i in 1..=n {
                    c.edge(u, &format!("t{i}"), pow(i));
                }
            }
        }
        c.edge(u, "x", pow(n) - b);
    };

    s_shape(&mut c, "s", q(0, 1));
    t_shape(&mut c, "t", e);
    for j in 1..=n {
        let jq = q(j as i64, 1);
        let (sj, tj) = (format!("s{j}"), format!("t{j}"));
        let has_t = j <= n_t;
        if j % 2 == 1 {
            if has_t {
                s_shape(&mut c, &tj, -(jq * e));
            }
            t_shape(&mut c, &sj, (jq + 1) * e);
        } else {
            s_shape(&mut c, &sj, -(jq * e));
            if has_t {
                t_shape(&mut c, &tj, (jq + 1) * e);
            }
        }
    }
    c.build()
}

/// Reduction gadget: an ε-quotient with 5 states exists iff some subset of
/// `p` sums to `target`. Returns the chain, ε = 1/(2T) and k = 5.
pub fn subset_sum_chain(p: &[u32], target: u32) -> Result<(LabelledMarkovChain, f64, usize)> {
    if p.is_empty() || p.contains(&0) {
        return Err(Error::InvalidArgument("need a nonempty multiset of positive integers".into()));
    }
    let total: i64 = p.iter().map(|&x| x as i64).sum();
    if target as i64 > total {
        return Err(Error::InvalidArgument(format!("target {target} exceeds the total {total}")));
    }
    let e = q(1, 2 * total);
    let h = q(1, 2);
    let mut c = RatChain::default();
    c.state("s", "a");
    for i in 1..=p.len() {
        c.state(&format!("s{i}"), "a");
    }
    c.state("sa", "a").state("sb", "b");
    c.state("t", "a").state("t1", "a").state("t2", "a").state("ta", "a").state("tb", "b");
    for (i, &pi) in p.iter().enumerate() {
        c.edge("s", &format!("s{}", i + 1), q(pi as i64, total));
        c.edge(&format!("s{}", i + 1), "sa", h).edge(&format!("s{}", i + 1), "sb", h);
    }
    let nt = q(target as i64, total);
    if nt > q(0, 1) {
        c.edge("t", "t1", nt);
    }
    if nt < q(1, 1) {
        c.edge("t", "t2", q(1, 1) - nt);
    }
    c.edge("t1", "ta", h - e).edge("t1", "tb", h + e);
    c.edge("t2", "ta", h + e).edge("t2", "tb", h - e);
    for a in ["sa", "sb", "ta", "tb"] {
        c.edge(a, a, q(1, 1));
    }
    Ok((c.build(), to_f64(e), 5))
}

/// Whether some subset of `p` sums to `target`.
pub fn subset_sum_exists(p: &[u32], target: u32) -> bool {
    (0u32..1 << p.len()).any(|mask| {
        p.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, &x)| x).sum::<u32>() == target
    })
}

pub const BRUTE_FORCE_MAX_STATES: usize = 12;

/// Whether a label-homogeneous partition into `k` blocks admits lumpability
/// within `eps` and yields a quotient with `k` distinct classes.
pub fn brute_force_k_quotient(chain: &LabelledMarkovChain, eps: f64, k: usize) -> Result<bool> {
    let n = chain.n_states();
    if n > BRUTE_FORCE_MAX_STATES {
        return Err(Error::TooLarge(format!("{n} states; at most {BRUTE_FORCE_MAX_STATES} supported")));
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for l in 0..chain.n_labels() {
        let g: Vec<usize> = (0..n).filter(|&s| chain.label(s).index() == l).collect();
        if !g.is_empty() {
            groups.push(g);
        }
    }
    if k < groups.len() || k > n {
        return Ok(false);
    }
    let mut assign = vec![0usize; n];
    Ok(search_groups(chain, eps, k, &groups, 0, 0, &mut assign))
}

fn search_groups(
    chain: &LabelledMarkovChain,
    eps: f64,
    k: usize,
    groups: &[Vec<usize>],
    gi: usize,
    used: usize,
    assign: &mut [usize],
) -> bool {
    if gi == groups.len() {
        return used == k && accept(chain, eps, k, assign);
    }
    let later = groups.len() - gi - 1;
    let g = &groups[gi];
    let max_here = g.len().min(k.saturating_sub(used + later));
    for kg in 1..=max_here {
        let mut rgs = vec![0usize; g.len()];
        let found = for_each_rgs(&mut rgs, 0, 0, kg, &mut |rgs| {
            for (&s, &b) in g.iter().zip(rgs.iter()) {
                assign[s] = used + b;
            }
            search_groups(chain, eps, k, groups, gi + 1, used + kg, assign)
        });
        if found {
            return true;
        }
    }
    false
}

/// Restricted-growth strings of length `rgs.len()` with exactly `k` blocks.
/// Stops early when `f` returns true.
fn for_each_rgs(rgs: &mut [usize], i: usize, max: usize, k: usize, f: &mut dyn FnMut(&[usize]) -> bool) -> bool {
    let n = rgs.len();
    if i == n {
        return max == k && f(rgs);
    }
    // Not enough positions left to open the remaining blocks.
    if k - max > n - i {
        return false;
    }
    let top = if i == 0 { 0 } else { max.min(k - 1) };
    for b in 0..=top {
        rgs[i] = b;
        let m = if i == 0 { 1 } else { max.max(b + 1) };
        if m <= k && for_each_rgs(rgs, i + 1, m, k, f) {
            return true;
        }
    }
    false
}

fn accept(chain: &LabelledMarkovChain, eps: f64, k: usize, assign: &[usize]) -> bool {
    let p = Partition::from_assignment(assign);
    let rows: Vec<SparseDistribution> = (0..chain.n_states()).map(|s| lump(chain, s, &p)).collect();
    for blk in p.blocks() {
        for (i, &a) in blk.iter().enumerate() {
            for &b in &blk[i + 1..] {
                if 0.5 * l1_distance(&rows[a], &rows[b]) > eps + 1e-12 {
                    return false;
                }
            }
        }
    }
    let mut centres = Vec::with_capacity(p.len());
    for blk in p.blocks() {
        let pts: Vec<SparseDistribution> = blk.iter().map(|&s| rows[s].clone()).collect();
        let (r, c) = l1_chebyshev_centre(&pts);
        if r > eps + 1e-12 {
            return false;
        }
        centres.push(c);
    }
    let reps: Vec<usize> = p.blocks().iter().map(|b| b[0]).collect();
    let lumped = LabelledMarkovChain::from_parts(
        chain.label_names().to_vec(),
        reps.iter().map(|&s| chain.label(s)).collect(),
        reps.iter().map(|&s| chain.name(s).to_string()).collect(),
        centres,
    );
    exact_quotient(&lumped).n_states() == k
}

/// Seeded random chain with `n` states, up to `branching` successors per row
/// and `n_labels` labels.
pub fn random_chain(seed: u64, n: usize, branching: usize, n_labels: usize) -> LabelledMarkovChain {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    crate::perturb::random_rows(&mut rng, n, branching, n_labels.clamp(1, n))
}

/// Named fixtures exported under `fixtures/v1`.
pub fn catalogue() -> Vec<(&'static str, LabelledMarkovChain)> {
    vec![
        ("fig1_eps0.1", fig1(0.1)),
        ("fig1_eps0", fig1(0.0)),
        ("fig4_eps0.01", fig4(0.01)),
        ("fig8", fig8()),
        ("example5_eps0.01", example5(0.01)),
        ("subset_sum_1_2_3_n3", subset_sum_chain(&[1, 2, 3], 3).unwrap().0),
        ("subset_sum_2_4_n3", subset_sum_chain(&[2, 4], 3).unwrap().0),
        ("family_m1_eps0.125", family_m_index(1, 0.125)),
        ("family_m2_eps0.125", family_m_index(2, 0.125)),
        ("family_m3_eps0.04", family_m_index(3, 0.04)),
        ("family_m4_eps0.04", family_m_index(4, 0.04)),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_rows() {
        let m = fig1(0.1);
        assert_eq!(m.row(0).entries(), &[(0, 0.5), (1, 0.5)]);
        assert_eq!(m.row(2).entries(), &[(2, 0.6), (3, 0.4)]);
        let m = fig8();
        assert_eq!(m.row(1).entries(), &[(0, 0.54), (3, 0.46)]);
        let m = fig4(0.01);
        assert_eq!(m.row(2).entries(), &[(2, 0.76), (3, 0.24)]);
    }

    #[test]
    fn rational_parsing() {
        assert_eq!(rational(0.1), q(1, 10));
        assert_eq!(rational(0.01), q(1, 100));
        assert_eq!(rational(0.125), q(1, 8));
    }

    #[test]
    fn subset_sum_shape() {
        let (m, eps, k) = subset_sum_chain(&[1, 2, 3], 3).unwrap();
        assert_eq!(m.n_states(), 11);
        assert!((eps - 1.0 / 12.0).abs() < 1e-15);
        assert_eq!(k, 5);
        assert!(m.rows().iter().all(|r| r.is_distribution(1e-15)));
        assert_eq!(subset_sum_chain(&[2, 4], 3).unwrap().0.n_states(), 10);
    }

    #[test]
    fn subset_sum_brute_force() {
        let (m, eps, k) = subset_sum_chain(&[1, 2, 3], 3).unwrap();
        assert!(brute_force_k_quotient(&m, eps, k).unwrap());
        let (m, eps, k) = subset_sum_chain(&[2, 4], 3).unwrap();
        assert!(!brute_force_k_quotient(&m, eps, k).unwrap());
    }

    #[test]
    fn brute_force_exact_size() {
        for seed in 0..10 {
            let m = random_chain(seed, 7, 2, 2);
            let k = exact_quotient(&m).n_states();
            assert!(brute_force_k_quotient(&m, 0.0, k).unwrap());
        }
        let big = random_chain(0, 13, 2, 2);
        assert!(matches!(brute_force_k_quotient(&big, 0.1, 3), Err(Error::TooLarge(_))));
    }

    #[test]
    fn rgs_counts_match_stirling_numbers() {
        let mut count = 0;
        let mut rgs = vec![0; 6];
        for_each_rgs(&mut rgs, 0, 0, 3, &mut |_| {
            count += 1;
            false
        });
        assert_eq!(count, 90);
    }

    #[test]
    fn family_shapes() {
        assert_eq!(family_m_index(1, 0.1).n_states(), 4);
        assert_eq!(family_m(FamilyKind::Odd, 3, 0.01).n_states(), 8);
        assert_eq!(family_m(FamilyKind::Even, 2, 0.01).n_states(), 7);
        let m = family_m(FamilyKind::Even, 3, 0.01);
        let x = m.state_by_name("x").unwrap();
        for s in 0..m.n_states() {
            assert_eq!(m.state_label_name(s) == "green", s == x);
        }
        // M(1) is the three-state example with x.
        let a = family_m_index(1, 0.01);
        let b = fig4(0.01);
        let rename = ["s", "s1", "t", "x"];
        for (i, n) in rename.iter().enumerate() {
            let s = a.state_by_name(n).unwrap();
            let row_a: Vec<(String, f64)> = a.row(s).iter().map(|(t, p)| (a.name(t).to_string(), p)).collect();
            let row_b: Vec<(String, f64)> = b.row(i).iter().map(|(t, p)| (rename[t].to_string(), p)).collect();
            let mut ra = row_a.clone();
            let mut rb = row_b.clone();
            ra.sort_by(|x, y| x.0.cmp(&y.0));
            rb.sort_by(|x, y| x.0.cmp(&y.0));
            assert_eq!(ra, rb, "state {n}");
        }
        assert!((family_eps_max(3) - 1.0 / 24.0).abs() < 1e-15);
    }
}
