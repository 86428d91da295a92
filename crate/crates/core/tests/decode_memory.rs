//! Allocation high-water mark of the coordinator decode.

use std::alloc::{GlobalAlloc, Layout, System};
use std::sync::atomic::{AtomicUsize, Ordering::SeqCst};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use fedinv::brs::{generator_matrix, CodeParams};
use fedinv::field::{choose_field, PointSet};
use fedinv::linalg::{gaussian_matrix, relative_frobenius};
use fedinv::protocol::{allocate_tasks, column_blocks, coordinator_decode, naive_decode, worker_encode, Generator};

struct Counting;

static CURRENT: AtomicUsize = AtomicUsize::new(0);
static PEAK: AtomicUsize = AtomicUsize::new(0);

unsafe impl GlobalAlloc for Counting {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        let p = System.alloc(layout);
        if !p.is_null() {
            let now = CURRENT.fetch_add(layout.size(), SeqCst) + layout.size();
            PEAK.fetch_max(now, SeqCst);
        }
        p
    }

    unsafe fn dealloc(&self, p: *mut u8, layout: Layout) {
        System.dealloc(p, layout);
        CURRENT.fetch_sub(layout.size(), SeqCst);
    }
}

#[global_allocator]
static ALLOC: Counting = Counting;

/// Peak bytes allocated on top of what was live when `f` started.
fn high_water<R>(f: impl FnOnce() -> R) -> (R, usize) {
    let base = CURRENT.load(SeqCst);
    PEAK.store(base, SeqCst);
    let r = f();
    (r, PEAK.load(SeqCst) - base)
}

#[test]
fn decode_memory_is_linear_in_k_times_n() {
    let (n_workers, k, order) = (17, 16, 256);
    // d = 2 gives 17 distinct column supports; rows are unbalanced since 17 ∤ 32
    let params = CodeParams::brs_unbalanced(n_workers, k).unwrap();
    let spec = choose_field(n_workers, 1, 0).unwrap();
    let gen: Generator = generator_matrix(&params, &PointSet::build(spec, n_workers).unwrap()).unwrap().into();
    let x = gaussian_matrix(order, order, 1.0, &mut ChaCha8Rng::seed_from_u64(9));
    let tasks = allocate_tasks(&gen);
    let blocks = column_blocks(&x, k);
    let encs: Vec<_> = (1..=k).map(|w| worker_encode(&blocks, &gen, &tasks, w).unwrap()).collect();

    let (decoded, structured) = high_water(|| coordinator_decode(&encs, &gen).unwrap());
    assert!(relative_frobenius(&decoded, &x) < 1e-8, "{}", relative_frobenius(&decoded, &x));
    let output = order * order * std::mem::size_of::<f64>();
    let complex = 2 * std::mem::size_of::<f64>();
    let budget = output + 8 * (k * order + k * k) * complex;
    assert!(structured <= budget, "structured decode peaked at {structured} bytes, budget {budget}");

    // the materialized Kronecker decode needs (kT)² complex numbers and exceeds it
    let (_, naive) = high_water(|| naive_decode(&encs, &gen).unwrap());
    assert!(naive > budget, "naive decode peaked at {naive} bytes, budget {budget}");
}
