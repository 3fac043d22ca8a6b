//! Dice, region similarity J, contour accuracy F and J&F on hand-made masks.

use graphseg::image::{BinaryMask, LabelMask};
use graphseg::metrics::{contour_f, default_boundary_tolerance, dice, evaluate_image, region_j};

fn main() -> graphseg::Result<()> {
    let square = |x0: usize, y0: usize, s: usize| BinaryMask::from_fn(64, 64, move |x, y| (x0..x0 + s).contains(&x) && (y0..y0 + s).contains(&y));
    let gt = square(16, 16, 24);
    let tol = default_boundary_tolerance(64, 64);
    println!("boundary tolerance {tol} px");
    for shift in [0, 1, 2, 4, 8] {
        let pred = square(16 + shift, 16, 24);
        println!(
            "shift {shift}: Dice {:.3}, J {:.3}, F {:.3}",
            dice(&pred, &gt)?,
            region_j(&pred, &gt)?,
            contour_f(&pred, &gt, tol)?
        );
    }

    // Label masks: class 0 is background and excluded from the average.
    let truth = LabelMask::from_fn(64, 64, |x, _| if x < 20 { 0 } else if x < 40 { 1 } else { 2 });
    let pred = LabelMask::from_fn(64, 64, |x, _| if x < 22 { 0 } else if x < 40 { 1 } else { 2 });
    let report = evaluate_image(&pred, &truth, 3, Some(0))?;
    for c in &report.per_class {
        println!("class {}: J {:.3}, F {:.3}, Dice {:.3}", c.class_id, c.j, c.f, c.dice);
    }
    println!("J&F {:.1}", report.j_and_f * 100.0);
    Ok(())
}
