#![allow(dead_code)]

use ergolab::cycle_ir::{Label, SystemIR};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A random IR of length at most `max_len` over labels `0..labels`.
pub fn random_system(rng: &mut impl Rng, max_len: u64, labels: Label, depth: u32) -> SystemIR {
    let max_len = max_len.max(1);
    let choice = if depth == 0 || max_len < 4 { 0 } else { rng.gen_range(0..4) };
    match choice {
        1 => {
            let k = rng.gen_range(1..=4u64);
            let each = (max_len / k).max(1);
            let towers = (0..k)
                .map(|_| SystemIR::tower(rng.gen_range(1..=each.min(60)), rng.gen_range(0..labels)).unwrap())
                .collect();
            SystemIR::looped(towers).unwrap()
        }
        2 => {
            let r = rng.gen_range(2..=4u64);
            let child = random_system(rng, max_len / r, labels, depth - 1);
            SystemIR::refine(&child, r).unwrap()
        }
        3 => {
            let a = random_system(rng, max_len / 2, labels, depth - 1);
            let b = random_system(rng, max_len / 2, labels, depth - 1);
            let (pa, pb) = (rng.gen_range(0..a.len()), rng.gen_range(0..b.len()));
            SystemIR::splice(&a, &b, pa, pb).unwrap()
        }
        _ => SystemIR::tower(rng.gen_range(1..=max_len.min(60)), rng.gen_range(0..labels)).unwrap(),
    }
}

/// The labels of a cycle in position order.
pub fn labels(ir: &SystemIR) -> Vec<Label> {
    ir.stream(0, ir.len() as usize)
}

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_ergolab")
}

pub fn workspace_configs() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}
