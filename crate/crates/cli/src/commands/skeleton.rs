use serde::Serialize;
use vasq_core::io::{read_mask, write_mask};
use vasq_core::skeleton::{
    build_tree, count_bifurcations, default_root, extract_skeleton, VesselTree, SPUR_MIN_VOXELS, SPUR_RADIUS_FACTOR,
};
use vasq_core::volume::VesselClass;

use crate::error::CliResult;
use crate::manifest::{beside, Manifest};
use crate::util::{require_file, write_json};
use crate::SkeletonArgs;

/// Tree file: summary counts followed by the full node/branch lists.
#[derive(Serialize)]
struct TreeDocument<'a> {
    class: VesselClass,
    root_hint: [usize; 3],
    bifurcations: usize,
    skeleton_voxels: usize,
    skeleton_length_mm: f64,
    tree: &'a VesselTree,
}

pub fn run(args: SkeletonArgs) -> CliResult<()> {
    require_file(&args.input)?;
    let class = VesselClass::from(args.class);
    let mask = read_mask(&args.input)?;
    mask.validate_labels()?;
    let skel = extract_skeleton(&mask, class);
    let root = args.root.unwrap_or_else(|| default_root(&skel, None));
    let tree = build_tree(&skel, root)?;
    write_mask(&args.out, &skel.to_mask().to_labels(class.code()))?;
    if let Some(p) = &args.tree {
        let doc = TreeDocument {
            class,
            root_hint: root,
            bifurcations: count_bifurcations(&tree),
            skeleton_voxels: tree.voxel_count(),
            skeleton_length_mm: tree.skeleton_length_mm(),
            tree: &tree,
        };
        write_json(p, &doc)?;
    }

    let config = serde_json::json!({
        "class": class,
        "root": args.root,
        "spur_min_voxels": SPUR_MIN_VOXELS,
        "spur_radius_factor": SPUR_RADIUS_FACTOR,
    });
    let mut m = Manifest::new("skeleton", config)?.conventions([
        "skeleton mask holds every voxel kept by thinning; the tree omits pruned spurs and cycle-breaking voxels"
            .into(),
        "a junction with k incident branches counts as k - 2 bifurcations".into(),
    ]);
    if tree.forest {
        m.flags.push("skeleton has more than one connected component".into());
    }
    m.input(&args.input)?;
    m.output(&args.out)?;
    if let Some(p) = &args.tree {
        m.output(p)?;
    }
    m.write(&beside(&args.out))
}
