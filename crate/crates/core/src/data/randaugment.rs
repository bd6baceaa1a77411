//! Pixel operations behind the weak and strong image augmentations.
//!
//! Operations follow the PIL semantics used by common RandAugment pools:
//! enhancement ops blend with a degenerate image, geometric ops use nearest
//! neighbour sampling with a grey fill.

use super::sample::Image;

const FILL: u8 = 128;
const CUTOUT_FILL: u8 = 127;

fn clamp_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

pub(crate) fn flip_horizontal(img: &Image) -> Image {
    let mut out = img.clone();
    for y in 0..img.height {
        for x in 0..img.width {
            for c in 0..img.channels {
                out.set(y, x, c, img.get(y, img.width - 1 - x, c));
            }
        }
    }
    out
}

/// Mirror index into `[0, n)` without repeating the edge pixel.
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let mut m = i.rem_euclid(period);
    if m >= n {
        m = period - m;
    }
    m as usize
}

/// Reflection-pad by `pad` then take the original-size window at `(dx, dy)`
/// of the padded image. `dx = dy = pad` reproduces the input.
pub(crate) fn pad_crop(img: &Image, pad: usize, dx: usize, dy: usize) -> Image {
    let mut out = img.clone();
    for y in 0..img.height {
        let sy = reflect(y as isize + dy as isize - pad as isize, img.height);
        for x in 0..img.width {
            let sx = reflect(x as isize + dx as isize - pad as isize, img.width);
            for c in 0..img.channels {
                out.set(y, x, c, img.get(sy, sx, c));
            }
        }
    }
    out
}

fn map_channels(img: &Image, f: impl Fn(usize, u8) -> u8) -> Image {
    let mut out = img.clone();
    let ch = img.channels;
    for (i, v) in out.data.iter_mut().enumerate() {
        *v = f(i % ch, *v);
    }
    out
}

fn blend(degenerate: &Image, img: &Image, factor: f64) -> Image {
    let mut out = img.clone();
    for ((o, &d), &s) in out.data.iter_mut().zip(&degenerate.data).zip(&img.data) {
        *o = clamp_u8(d as f64 + factor * (s as f64 - d as f64));
    }
    out
}

fn luminance(img: &Image, y: usize, x: usize) -> f64 {
    if img.channels >= 3 {
        0.299 * img.get(y, x, 0) as f64 + 0.587 * img.get(y, x, 1) as f64 + 0.114 * img.get(y, x, 2) as f64
    } else {
        img.get(y, x, 0) as f64
    }
}

fn grayscale(img: &Image) -> Image {
    let mut out = img.clone();
    for y in 0..img.height {
        for x in 0..img.width {
            let l = clamp_u8(luminance(img, y, x));
            for c in 0..img.channels {
                out.set(y, x, c, l);
            }
        }
    }
    out
}

pub(crate) fn brightness(img: &Image, factor: f64) -> Image {
    blend(&Image::filled(img.height, img.width, img.channels, 0), img, factor)
}

pub(crate) fn color(img: &Image, factor: f64) -> Image {
    blend(&grayscale(img), img, factor)
}

pub(crate) fn contrast(img: &Image, factor: f64) -> Image {
    let n = (img.height * img.width) as f64;
    let mut mean = 0.0;
    for y in 0..img.height {
        for x in 0..img.width {
            mean += luminance(img, y, x);
        }
    }
    let mean = clamp_u8(mean / n);
    blend(&Image::filled(img.height, img.width, img.channels, mean), img, factor)
}

pub(crate) fn sharpness(img: &Image, factor: f64) -> Image {
    // PIL SMOOTH filter; border pixels keep their values
    let mut smooth = img.clone();
    if img.height >= 3 && img.width >= 3 {
        for y in 1..img.height - 1 {
            for x in 1..img.width - 1 {
                for c in 0..img.channels {
                    let mut acc = 0.0;
                    for ky in 0..3 {
                        for kx in 0..3 {
                            let w = if ky == 1 && kx == 1 { 5.0 } else { 1.0 };
                            acc += w * img.get(y + ky - 1, x + kx - 1, c) as f64;
                        }
                    }
                    smooth.set(y, x, c, clamp_u8(acc / 13.0));
                }
            }
        }
    }
    blend(&smooth, img, factor)
}

pub(crate) fn posterize(img: &Image, bits: u32) -> Image {
    let shift = 8 - bits.clamp(1, 8);
    map_channels(img, |_, v| (v >> shift) << shift)
}

pub(crate) fn solarize(img: &Image, threshold: u32) -> Image {
    map_channels(img, |_, v| if (v as u32) < threshold { v } else { 255 - v })
}

pub(crate) fn auto_contrast(img: &Image) -> Image {
    let ch = img.channels;
    let mut lo = vec![255u8; ch];
    let mut hi = vec![0u8; ch];
    for (i, &v) in img.data.iter().enumerate() {
        lo[i % ch] = lo[i % ch].min(v);
        hi[i % ch] = hi[i % ch].max(v);
    }
    map_channels(img, |c, v| {
        if hi[c] <= lo[c] {
            v
        } else {
            let scale = 255.0 / (hi[c] - lo[c]) as f64;
            clamp_u8((v - lo[c]) as f64 * scale)
        }
    })
}

pub(crate) fn equalize(img: &Image) -> Image {
    let ch = img.channels;
    let mut luts = Vec::with_capacity(ch);
    for c in 0..ch {
        let mut hist = [0usize; 256];
        for v in img.data.iter().skip(c).step_by(ch) {
            hist[*v as usize] += 1;
        }
        let nonzero: Vec<usize> = hist.iter().copied().filter(|&h| h > 0).collect();
        let total: usize = nonzero.iter().sum();
        let last = nonzero.last().copied().unwrap_or(0);
        let step = (total - last) / 255;
        let mut lut = [0u8; 256];
        if step == 0 {
            for (i, l) in lut.iter_mut().enumerate() {
                *l = i as u8;
            }
        } else {
            let mut n = step / 2;
            for (i, l) in lut.iter_mut().enumerate() {
                *l = (n / step).min(255) as u8;
                n += hist[i];
            }
        }
        luts.push(lut);
    }
    map_channels(img, |c, v| luts[c][v as usize])
}

/// Apply the inverse affine map `(x, y) -> (a x + b y + c, d x + e y + f)`
/// with nearest-neighbour sampling.
fn affine(img: &Image, m: [f64; 6]) -> Image {
    let mut out = Image::filled(img.height, img.width, img.channels, FILL);
    for y in 0..img.height {
        for x in 0..img.width {
            let (xf, yf) = (x as f64 + 0.5, y as f64 + 0.5);
            let sx = m[0] * xf + m[1] * yf + m[2];
            let sy = m[3] * xf + m[4] * yf + m[5];
            let (ix, iy) = (sx.floor(), sy.floor());
            if ix >= 0.0 && iy >= 0.0 && (ix as usize) < img.width && (iy as usize) < img.height {
                for c in 0..img.channels {
                    out.set(y, x, c, img.get(iy as usize, ix as usize, c));
                }
            }
        }
    }
    out
}

pub(crate) fn rotate(img: &Image, degrees: f64) -> Image {
    let (cx, cy) = (img.width as f64 / 2.0, img.height as f64 / 2.0);
    let t = degrees.to_radians();
    let (cos, sin) = (t.cos(), t.sin());
    // inverse of a counter-clockwise rotation about the centre
    affine(
        img,
        [cos, -sin, cx - cos * cx + sin * cy, sin, cos, cy - sin * cx - cos * cy],
    )
}

pub(crate) fn shear_x(img: &Image, v: f64) -> Image {
    affine(img, [1.0, v, 0.0, 0.0, 1.0, 0.0])
}

pub(crate) fn shear_y(img: &Image, v: f64) -> Image {
    affine(img, [1.0, 0.0, 0.0, v, 1.0, 0.0])
}

pub(crate) fn translate_x(img: &Image, pixels: f64) -> Image {
    affine(img, [1.0, 0.0, pixels, 0.0, 1.0, 0.0])
}

pub(crate) fn translate_y(img: &Image, pixels: f64) -> Image {
    affine(img, [1.0, 0.0, 0.0, 0.0, 1.0, pixels])
}

/// Grey square of side `size` centred at `(cx, cy)`, clipped to the image.
pub(crate) fn cutout(img: &Image, cx: usize, cy: usize, size: usize) -> Image {
    let mut out = img.clone();
    let half = size / 2;
    let x0 = cx.saturating_sub(half);
    let y0 = cy.saturating_sub(half);
    let x1 = (cx + size - half).min(img.width);
    let y1 = (cy + size - half).min(img.height);
    for y in y0..y1 {
        for x in x0..x1 {
            for c in 0..img.channels {
                out.set(y, x, c, CUTOUT_FILL);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(h: usize, w: usize) -> Image {
        let data = (0..h * w * 3).map(|i| (i * 7 % 256) as u8).collect();
        Image::new(h, w, 3, data).unwrap()
    }

    #[test]
    fn reflect_indices() {
        let got: Vec<usize> = (-3..6).map(|i| reflect(i, 4)).collect();
        assert_eq!(got, [3, 2, 1, 0, 1, 2, 3, 2, 1]);
    }

    #[test]
    fn centred_crop_is_identity() {
        let img = ramp(8, 6);
        assert_eq!(pad_crop(&img, 4, 4, 4), img);
        assert_eq!(pad_crop(&img, 0, 0, 0), img);
    }

    #[test]
    fn double_flip_is_identity() {
        let img = ramp(5, 7);
        assert_eq!(flip_horizontal(&flip_horizontal(&img)), img);
    }

    #[test]
    fn unit_factor_enhancements_are_identity() {
        let img = ramp(6, 6);
        assert_eq!(brightness(&img, 1.0), img);
        assert_eq!(color(&img, 1.0), img);
        assert_eq!(contrast(&img, 1.0), img);
        assert_eq!(sharpness(&img, 1.0), img);
        assert_eq!(rotate(&img, 0.0), img);
        assert_eq!(translate_x(&img, 0.0), img);
    }

    #[test]
    fn solarize_and_posterize() {
        let img = Image::new(1, 2, 1, vec![10, 200]).unwrap();
        assert_eq!(solarize(&img, 128).data, vec![10, 55]);
        assert_eq!(posterize(&img, 4).data, vec![0, 192]);
    }

    #[test]
    fn cutout_is_clipped() {
        let img = Image::filled(4, 4, 1, 0);
        let out = cutout(&img, 0, 0, 4);
        assert_eq!(out.data.iter().filter(|&&v| v == CUTOUT_FILL).count(), 4);
    }

    #[test]
    fn constant_image_stays_constant_under_crop_and_flip() {
        let img = Image::filled(8, 8, 3, 77);
        assert_eq!(pad_crop(&flip_horizontal(&img), 4, 1, 7), img);
        assert_eq!(auto_contrast(&img), img);
    }
}
