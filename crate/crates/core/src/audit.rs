//! Process-wide tallies of solver certificates and fit invariants.
//!
//! Every group-lasso and glasso return and every alternating fit is counted,
//! so a long-running check can report how many results met their
//! certificates without instrumenting call sites.

use std::sync::atomic::{AtomicUsize, Ordering};

/// Group optimality tolerance a returned group-lasso solution must meet.
pub const GROUP_KKT_TOL: f64 = 1e-5;
/// Entrywise optimality tolerance a returned glasso solution must meet.
pub const GLASSO_KKT_TOL: f64 = 1e-4;

static GROUP_SOLVES: AtomicUsize = AtomicUsize::new(0);
static GROUP_KKT_FAILURES: AtomicUsize = AtomicUsize::new(0);
static GLASSO_SOLVES: AtomicUsize = AtomicUsize::new(0);
static GLASSO_KKT_FAILURES: AtomicUsize = AtomicUsize::new(0);
static GLASSO_NOT_PD: AtomicUsize = AtomicUsize::new(0);
static FITS: AtomicUsize = AtomicUsize::new(0);
static NON_MONOTONE: AtomicUsize = AtomicUsize::new(0);
static GROUP_BREAKS: AtomicUsize = AtomicUsize::new(0);

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AuditSnapshot {
    pub group_solves: usize,
    pub group_kkt_failures: usize,
    pub glasso_solves: usize,
    pub glasso_kkt_failures: usize,
    pub glasso_not_pd: usize,
    pub fits: usize,
    pub non_monotone: usize,
    pub group_breaks: usize,
}

pub fn snapshot() -> AuditSnapshot {
    let get = |a: &AtomicUsize| a.load(Ordering::Relaxed);
    AuditSnapshot {
        group_solves: get(&GROUP_SOLVES),
        group_kkt_failures: get(&GROUP_KKT_FAILURES),
        glasso_solves: get(&GLASSO_SOLVES),
        glasso_kkt_failures: get(&GLASSO_KKT_FAILURES),
        glasso_not_pd: get(&GLASSO_NOT_PD),
        fits: get(&FITS),
        non_monotone: get(&NON_MONOTONE),
        group_breaks: get(&GROUP_BREAKS),
    }
}

fn bump(counter: &AtomicUsize, hit: bool) {
    if hit {
        counter.fetch_add(1, Ordering::Relaxed);
    }
}

pub(crate) fn record_group_lasso(kkt: f64) {
    bump(&GROUP_SOLVES, true);
    bump(&GROUP_KKT_FAILURES, !(kkt <= GROUP_KKT_TOL));
}

pub(crate) fn record_glasso(kkt: Option<f64>) {
    bump(&GLASSO_SOLVES, true);
    match kkt {
        Some(v) => bump(&GLASSO_KKT_FAILURES, !(v <= GLASSO_KKT_TOL)),
        None => bump(&GLASSO_NOT_PD, true),
    }
}

pub(crate) fn record_fit(monotone: bool, groups_intact: bool) {
    bump(&FITS, true);
    bump(&NON_MONOTONE, !monotone);
    bump(&GROUP_BREAKS, !groups_intact);
}
