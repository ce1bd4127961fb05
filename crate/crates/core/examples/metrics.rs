//! Score corrupted copies of ground-truth masks with pixel and corner error.

use layoutforge::layout::LayoutMask;
use layoutforge::metrics::{corner_error, extract_corners, pixel_error};
use layoutforge::synth::{generate_sample, SynthConfig};
use layoutforge::RoomTaxonomy;

/// Shift every row right by `dx`, repeating the left column.
fn shifted(m: &LayoutMask, dx: usize) -> LayoutMask {
    LayoutMask::from_fn(m.width(), m.height(), |r, c| m.get(r, c.saturating_sub(dx)))
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let tax = RoomTaxonomy::default_lsun();
    let cfg = SynthConfig { width: 128, height: 128, seed: 4, ..Default::default() }.resolved(&tax)?;
    println!("id  type  corners  shift  PE%     Ecor%");
    for i in 0..6 {
        let s = generate_sample(&cfg, &tax, i)?;
        let gt = extract_corners(&s.mask);
        for dx in [0, 2, 6] {
            let pred = shifted(&s.mask, dx);
            let pe = pixel_error(&pred, &s.mask)?;
            let ce = corner_error(&extract_corners(&pred), &gt, 128, 128)?;
            println!("{i:>2}  {:>4}  {:>7}  {dx:>5}  {pe:>6.3}  {ce:>6.3}", s.poly.room_type, gt.len());
        }
    }
    Ok(())
}
