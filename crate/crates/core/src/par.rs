//! Data-parallel helpers. With the `parallel` feature (default) work fans
//! out over rayon; without it, or with a width of 1, everything runs on the
//! calling thread. Output order always matches input order.

/// Map `f` over `items`, preserving order.
#[cfg(feature = "parallel")]
pub fn map<T, R, F>(items: &[T], width: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    if width > 1 && items.len() > 1 {
        items.par_iter().map(f).collect()
    } else {
        items.iter().map(f).collect()
    }
}

#[cfg(not(feature = "parallel"))]
pub fn map<T, R, F>(items: &[T], _width: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    items.iter().map(f).collect()
}

/// Run `f` inside a pool of `width` threads.
#[cfg(feature = "parallel")]
pub fn with_pool<R: Send>(width: usize, f: impl FnOnce() -> R + Send) -> R {
    if width <= 1 {
        return f();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(width).build() {
        Ok(pool) => pool.install(f),
        Err(e) => {
            log::warn!("cannot start a {width}-thread pool ({e}); running sequentially");
            f()
        }
    }
}

#[cfg(not(feature = "parallel"))]
pub fn with_pool<R: Send>(_width: usize, f: impl FnOnce() -> R + Send) -> R {
    f()
}

pub fn enabled() -> bool {
    cfg!(feature = "parallel")
}
