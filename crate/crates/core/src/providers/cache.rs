use std::sync::Mutex;

use lru::LruCache;
use sha2::{Digest, Sha256};

use super::*;

/// Content hash of a view request, used as the image cache key.
pub fn view_key(req: &ViewRequest) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(req.pano.as_str().as_bytes());
    h.update([0]);
    h.update(req.heading.value().to_bits().to_le_bytes());
    h.update(req.fov_deg.to_bits().to_le_bytes());
    h.update(req.pitch_deg.to_bits().to_le_bytes());
    h.finalize().into()
}

struct Inner {
    lru: LruCache<[u8; 32], ImageRef>,
    bytes: usize,
}

/// LRU image cache in front of a panorama provider, bounded by total bytes.
pub struct CachedPanoramas<P> {
    inner: P,
    budget_bytes: usize,
    cache: Mutex<Inner>,
}

impl<P: PanoramaProvider> CachedPanoramas<P> {
    pub fn new(inner: P, budget_bytes: usize) -> Self {
        Self {
            inner,
            budget_bytes,
            cache: Mutex::new(Inner {
                lru: LruCache::unbounded(),
                bytes: 0,
            }),
        }
    }

    pub fn cached_bytes(&self) -> usize {
        self.cache.lock().unwrap().bytes
    }

    pub fn cached_len(&self) -> usize {
        self.cache.lock().unwrap().lru.len()
    }
}

impl<P: PanoramaProvider> PanoramaProvider for CachedPanoramas<P> {
    fn nearest_panorama(&self, coord: GeoCoordinate) -> ProviderResult<PanoramaMeta> {
        self.inner.nearest_panorama(coord)
    }

    fn panorama(&self, id: &PanoId) -> ProviderResult<PanoramaMeta> {
        self.inner.panorama(id)
    }

    fn render_view(&self, req: &ViewRequest) -> ProviderResult<ImageRef> {
        let key = view_key(req);
        if let Some(hit) = self.cache.lock().unwrap().lru.get(&key) {
            return Ok(hit.clone());
        }
        // fetch without holding the lock
        let image = self.inner.render_view(req)?;
        let size = image.bytes.len();
        if size <= self.budget_bytes {
            let mut cache = self.cache.lock().unwrap();
            if cache.lru.put(key, image.clone()).is_none() {
                cache.bytes += size;
            }
            while cache.bytes > self.budget_bytes {
                match cache.lru.pop_lru() {
                    Some((_, old)) => cache.bytes -= old.bytes.len(),
                    None => break,
                }
            }
        }
        Ok(image)
    }
}
