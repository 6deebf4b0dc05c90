use vasq_core::metrics::abundance_ratios;
use vasq_core::morph::euler_characteristic;
use vasq_core::phantom::{build_phantom, PhantomCase, PhantomSpec};
use vasq_core::skeleton::{
    build_tree, count_bifurcations, decompose_levels, extract_skeleton, skeleton_length, VesselTree,
};
use vasq_core::volume::{label, Geometry, LabelMask, VesselClass, Volume};

fn phantom(depth: u32) -> PhantomCase {
    build_phantom(&PhantomSpec { depth, ..Default::default() }).unwrap()
}

fn tree_of(mask: &LabelMask, class: VesselClass, root: [usize; 3]) -> VesselTree {
    build_tree(&extract_skeleton(mask, class), root).unwrap()
}

#[test]
fn binary_phantoms_have_exact_bifurcations_and_close_lengths() {
    for depth in 1..=5 {
        let case = phantom(depth);
        for class in VesselClass::BOTH {
            let analytic = case.analytic.class(class);
            let tree = tree_of(&case.truth, class, case.root_voxel(class));
            assert_eq!(count_bifurcations(&tree), (1 << depth) - 1, "depth {depth} {class:?}");
            assert_eq!(analytic.bifurcations, (1 << depth) - 1);

            let expected = analytic.centerline_length_mm / tree.mean_step_mm();
            let count = tree.voxel_count() as f64;
            let rel = (count - expected).abs() / expected;
            assert!(rel < 0.08, "depth {depth} {class:?}: {count} voxels vs {expected:.1}");

            let mask = case.truth.class_mask(class);
            let skel = extract_skeleton(&case.truth, class).to_mask();
            assert_eq!(euler_characteristic(&mask), euler_characteristic(&skel), "depth {depth}");
        }
    }
}

/// Quarter turn about z (`axis == 2`) or x (`axis == 0`), with the voxel
/// map applied to points.
fn quarter_turn(mask: &LabelMask, axis: usize) -> (LabelMask, impl Fn([usize; 3]) -> [usize; 3]) {
    let [nx, ny, nz] = mask.geom.dims;
    let s = mask.geom.spacing;
    let (dims, spacing) =
        if axis == 2 { ([ny, nx, nz], [s[1], s[0], s[2]]) } else { ([nx, nz, ny], [s[0], s[2], s[1]]) };
    let map = move |[x, y, z]: [usize; 3]| if axis == 2 { [ny - 1 - y, x, z] } else { [x, nz - 1 - z, y] };
    let geom = Geometry::new(dims, spacing, [0.0; 3]).unwrap();
    let mut out = Volume::filled(geom, 0u8);
    for i in 0..mask.len() {
        let [x, y, z] = map(mask.geom.coords(i));
        *out.at_mut(x, y, z) = mask.data[i];
    }
    (out, map)
}

#[test]
fn quarter_turn_keeps_bifurcations_and_length() {
    let case = phantom(3);
    for axis in [2, 0] {
        let (turned, map) = quarter_turn(&case.truth, axis);
        for class in VesselClass::BOTH {
            let r = case.root_voxel(class);
            let a = tree_of(&case.truth, class, r);
            let b = tree_of(&turned, class, map(r));
            assert_eq!(count_bifurcations(&a), count_bifurcations(&b), "axis {axis} {class:?}");
            assert_eq!(a.voxel_count(), b.voxel_count(), "axis {axis} {class:?}");
            let (sa, sb) = (extract_skeleton(&case.truth, class), extract_skeleton(&turned, class));
            assert_eq!(skeleton_length(&sa), skeleton_length(&sb));
        }
    }
}

#[test]
fn decomposed_levels_match_generator_generations() {
    for depth in [3, 5] {
        let case = phantom(depth);
        for class in VesselClass::BOTH {
            let tree = tree_of(&case.truth, class, case.root_voxel(class));
            let mask = case.truth.class_mask(class);
            let levels = decompose_levels(&tree, &mask, &case.lung, &case.heart).unwrap();
            levels.check_nesting().unwrap();
            assert_eq!(levels.full(), &mask);
            for i in 0..4 {
                for j in i + 1..4 {
                    let (a, b) = (levels.delta(i), levels.delta(j));
                    assert!((0..a.len()).all(|k| !(a.data[k] && b.data[k])));
                }
            }
            let codes = levels.to_codes();
            let mut misassigned = Vec::new();
            for (n, seg) in case.analytic.class(class).branches.iter().enumerate() {
                let mid: [f64; 3] = std::array::from_fn(|a| 0.5 * (seg.start[a] + seg.end[a]));
                let ci = case.truth.geom.continuous_index(mid);
                let [x, y, z] = ci.map(|v| v.round() as usize);
                let expected = if case.heart.at(x, y, z) == &true { 0 } else { seg.level };
                let got = *codes.at(x, y, z) as usize;
                if got != expected + 1 {
                    misassigned.push((n, seg.generation, expected, got.saturating_sub(1)));
                }
            }
            assert!(misassigned.is_empty(), "depth {depth} {class:?}: {misassigned:?}");
        }
    }
}

#[test]
fn mask_inside_the_heart_is_all_level_zero() {
    let case = phantom(1);
    let class = VesselClass::Artery;
    let tree = tree_of(&case.truth, class, case.root_voxel(class));
    let inside = case.truth.class_mask(class).and(&case.heart).unwrap();
    let everything = Volume::filled(inside.geom, true);
    let levels = decompose_levels(&tree, &inside, &everything.map(|_| false), &everything).unwrap();
    for l in &levels.levels {
        assert_eq!(l, &inside);
    }
}

#[test]
fn bifurcation_ratio_after_deleting_late_generations() {
    let case = phantom(5);
    let levels = [case.levels(VesselClass::Artery), case.levels(VesselClass::Vein)];
    let pruned = case.truth_up_to_generation(2);
    assert!((0..pruned.len()).all(|i| pruned.data[i] == 0 || pruned.data[i] == case.truth.data[i]));
    let r = abundance_ratios(&pruned, &case.truth, levels).unwrap();
    for c in [r.artery, r.vein] {
        assert_eq!(c.truth.bifurcations, 31);
        assert_eq!(c.pred.bifurcations, 3);
        assert_eq!(c.bc_ratio, 3.0 / 31.0);
        assert!(c.sl_ratio > 0.0 && c.sl_ratio < 1.0);
    }

    let same = abundance_ratios(&case.truth, &case.truth, levels).unwrap();
    assert_eq!((same.artery.sl_ratio, same.artery.bc_ratio), (1.0, 1.0));
    assert_eq!((same.vein.sl_ratio, same.vein.bc_ratio), (1.0, 1.0));
    let empty = Volume::filled(case.truth.geom, label::BACKGROUND);
    let none = abundance_ratios(&empty, &case.truth, levels).unwrap();
    assert_eq!((none.artery.sl_ratio, none.artery.bc_ratio), (0.0, 0.0));
    assert!(abundance_ratios(&case.truth, &empty, levels).is_err());
}
