use std::collections::BTreeMap;
use std::sync::mpsc;

use rayon::prelude::*;

/// Maps `items` on `jobs` worker threads and feeds the results to `sink` on
/// the calling thread, in input order. `jobs <= 1` runs inline.
pub fn ordered_map<T, R, F, S>(items: &[T], jobs: usize, f: F, mut sink: S) -> anyhow::Result<()>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
    S: FnMut(R) -> anyhow::Result<()>,
{
    if jobs <= 1 {
        for item in items {
            sink(f(item))?;
        }
        return Ok(());
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build()?;
    let (tx, rx) = mpsc::channel::<(usize, R)>();
    let f = &f;
    std::thread::scope(|scope| {
        scope.spawn(move || {
            pool.install(|| {
                items.par_iter().enumerate().for_each_with(tx, |tx, (i, item)| {
                    // the receiver is gone only if the sink failed
                    let _ = tx.send((i, f(item)));
                })
            })
        });
        let mut pending = BTreeMap::new();
        let mut next = 0;
        for (i, r) in rx {
            pending.insert(i, r);
            while let Some(r) = pending.remove(&next) {
                sink(r)?;
                next += 1;
            }
        }
        Ok(())
    })
}
