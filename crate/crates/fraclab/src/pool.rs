use std::sync::mpsc;
use std::thread;

/// Runs `f` on every job with up to `workers` threads and returns the results
/// in job order.
///
/// Worker `w` takes jobs `w, w + workers, ...`; results come back over a
/// channel tagged with their index.
pub fn run_pool<J, R, F>(jobs: Vec<J>, workers: usize, f: F) -> Vec<R>
where
    J: Send,
    R: Send,
    F: Fn(J) -> R + Sync,
{
    let n = jobs.len();
    let workers = workers.clamp(1, n.max(1));
    if workers == 1 {
        return jobs.into_iter().map(f).collect();
    }
    let mut shares: Vec<Vec<(usize, J)>> = (0..workers).map(|_| Vec::new()).collect();
    for (i, job) in jobs.into_iter().enumerate() {
        shares[i % workers].push((i, job));
    }
    let (tx, rx) = mpsc::channel();
    thread::scope(|scope| {
        for share in shares {
            let tx = tx.clone();
            let f = &f;
            scope.spawn(move || {
                for (i, job) in share {
                    if tx.send((i, f(job))).is_err() {
                        break;
                    }
                }
            });
        }
        drop(tx);
        let mut out: Vec<Option<R>> = (0..n).map(|_| None).collect();
        for (i, r) in rx {
            out[i] = Some(r);
        }
        out.into_iter()
            .map(|r| r.expect("every job reports once"))
            .collect()
    })
}
