//! Exact squared Euclidean distance transform (Meijster, Roerdink & Hesselink),
//! using integer arithmetic throughout so results are bit-reproducible.

/// Squared distance from every pixel of an `height x width` grid to the nearest
/// pixel for which `is_source` holds. Returns `None` when there is no source.
pub fn squared_edt(
    height: usize,
    width: usize,
    is_source: impl Fn(usize, usize) -> bool,
) -> Option<Vec<u64>> {
    if height == 0 || width == 0 {
        return Some(Vec::new());
    }
    let inf = (height + width) as i64;
    let mut g = vec![0i64; height * width];
    let mut any = false;

    // Column pass: vertical distance to the nearest source in the same column.
    for c in 0..width {
        let mut prev = inf;
        for r in 0..height {
            let v = if is_source(r, c) {
                any = true;
                0
            } else {
                (prev + 1).min(inf)
            };
            g[r * width + c] = v;
            prev = v;
        }
        for r in (0..height.saturating_sub(1)).rev() {
            let below = g[(r + 1) * width + c];
            if below < g[r * width + c] {
                g[r * width + c] = below + 1;
            }
        }
    }
    if !any {
        return None;
    }

    // Row pass: lower envelope of parabolas f(x, i) = (x - i)^2 + g(i)^2.
    let mut out = vec![0u64; height * width];
    let n = width as i64;
    let mut s = vec![0i64; width];
    let mut t = vec![0i64; width];
    for r in 0..height {
        let row = &g[r * width..(r + 1) * width];
        let f = |x: i64, i: i64| (x - i) * (x - i) + row[i as usize] * row[i as usize];
        let sep = |i: i64, u: i64| {
            let gi = row[i as usize];
            let gu = row[u as usize];
            (u * u - i * i + gu * gu - gi * gi).div_euclid(2 * (u - i))
        };
        let mut q: i64 = 0;
        s[0] = 0;
        t[0] = 0;
        for u in 1..n {
            while q >= 0 && f(t[q as usize], s[q as usize]) > f(t[q as usize], u) {
                q -= 1;
            }
            if q < 0 {
                q = 0;
                s[0] = u;
            } else {
                let w = 1 + sep(s[q as usize], u);
                if w < n {
                    q += 1;
                    s[q as usize] = u;
                    t[q as usize] = w;
                }
            }
        }
        for u in (0..n).rev() {
            out[r * width + u as usize] = f(u, s[q as usize]) as u64;
            if u == t[q as usize] {
                q -= 1;
            }
        }
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute(h: usize, w: usize, src: &[bool]) -> Vec<u64> {
        let pts: Vec<(i64, i64)> = (0..h * w)
            .filter(|&i| src[i])
            .map(|i| ((i / w) as i64, (i % w) as i64))
            .collect();
        (0..h * w)
            .map(|i| {
                let (r, c) = ((i / w) as i64, (i % w) as i64);
                pts.iter()
                    .map(|&(a, b)| ((r - a).pow(2) + (c - b).pow(2)) as u64)
                    .min()
                    .unwrap()
            })
            .collect()
    }

    #[test]
    fn no_source_is_none() {
        assert!(squared_edt(3, 4, |_, _| false).is_none());
    }

    #[test]
    fn single_source_corner() {
        let d = squared_edt(3, 4, |r, c| r == 0 && c == 0).unwrap();
        assert_eq!(d[2 * 4 + 3], 4 + 9);
    }

    proptest! {
        #[test]
        fn matches_brute_force(h in 1usize..20, w in 1usize..20,
                               bits in proptest::collection::vec(proptest::bool::weighted(0.08), 400)) {
            let mut src: Vec<bool> = bits[..h * w].to_vec();
            if !src.iter().any(|&b| b) {
                src[0] = true;
            }
            let d = squared_edt(h, w, |r, c| src[r * w + c]).unwrap();
            prop_assert_eq!(d, brute(h, w, &src));
        }
    }
}
