//! Rooted tree distances, path distances and tree summaries.

use gwprune::realtree::EraseMode;
use gwprune::treemetric::{half_distortion, skorohod_upper, summary, Budget};
use gwprune::{RealTree, Result};

fn main() -> Result<()> {
    let budget = Budget::default();
    let y = RealTree::star(1.0, 2, 1.0);
    let seg = RealTree::path(1, 2.0);
    let d = half_distortion(&y, &seg, &budget);
    println!("Y vs segment of length 2: {} (exact: {})", d.value, d.is_exact());

    let e = y.erase(0.4, EraseMode::KeepNodes);
    let d = half_distortion(&e, &y, &budget);
    println!("erasing 0.4 moves the Y by {:.3} <= 0.4", d.value);

    let p1 = vec![(0.0, y.clone()), (1.0, seg.clone())];
    let p2 = vec![(0.0, y.clone()), (1.1, seg.clone())];
    println!("Skorohod bound for a jump moved from 1 to 1.1: {:.4}", skorohod_upper(&p1, &p2, 3.0, &budget)?);

    let s = summary(&y, &[0.5, 1.0, 1.5]);
    println!("summary of the Y: {:?}", s.to_vec());
    Ok(())
}
