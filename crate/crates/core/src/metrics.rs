use crate::error::{Error, Result};
use crate::image::Image;

/// Peak signal-to-noise ratio in dB; `f64::INFINITY` when the images are identical.
pub fn psnr(a: &Image, b: &Image, peak: f64) -> Result<f64> {
    a.check_same_side(b)?;
    if peak.is_nan() || peak <= 0.0 {
        return Err(Error::Config(format!("PSNR peak must be > 0, got {peak}")));
    }
    if a.is_empty() {
        return Err(Error::size("PSNR of empty images"));
    }
    let mse = a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        / a.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psnr_examples() {
        let peak = 3.0;
        let a = Image::zeros(4);
        assert_eq!(psnr(&a, &a, peak).unwrap(), f64::INFINITY);
        assert!((psnr(&a, &Image::filled(4, peak), peak).unwrap() - 0.0).abs() < 1e-12);
        assert!((psnr(&a, &Image::filled(4, peak / 10.0), peak).unwrap() - 20.0).abs() < 1e-12);
        assert!(matches!(
            psnr(&a, &Image::zeros(2), peak),
            Err(Error::Size(_))
        ));
        assert!(psnr(&a, &a, 0.0).is_err());
    }
}
