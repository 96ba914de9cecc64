// Scratch: criterion-7 with longer training + refine variants + breakdown.
use latticeforge::catalog;
use latticeforge::gen::{Dataset, GenConfig, TrainItem, NoiseSchedule, train_with_schedule};
use latticeforge::homogenize::{effective_properties, MaterialSpec, StrutSection};
use latticeforge::refine::{refine, RefineConfig};
use latticeforge::validity::{validate_cell, FramePolicy};
use latticeforge::{Frame, SymmetryGroup, UnitCell, Vec3};

fn main() {
    let section = StrutSection::new(0.05).unwrap();
    let material = MaterialSpec::default();
    let mut items = Vec::new();
    let mut entry_info = Vec::new();
    for name in catalog::list() {
        let cell = catalog::make(name).unwrap();
        let (_, props) = effective_properties(&cell, &section, &material).unwrap();
        let props = props.to_property_vector();
        entry_info.push((name.to_string(), props, cell.n_vertices()));
        items.push(TrainItem { cell, props });
    }
    let dataset = Dataset::new(items).unwrap();
    let schedule = NoiseSchedule::default_linear();
    let config = GenConfig { n_max: 24, epochs: 6000, learning_rate: 3e-3, seed: 20, ..GenConfig::default() };
    let t0 = std::time::Instant::now();
    let (model, report) = train_with_schedule(&dataset, &config, &schedule, true).unwrap();
    println!("train 6000ep: {:.0}s loss ->{:.4}", t0.elapsed().as_secs_f64(), report.epoch_coord_losses.last().unwrap());

    for (label, merge, snap, pair, cycles) in [
        ("loose", 0.05, 0.15, 0.05, 5usize),
        ("looser-merge", 0.08, 0.15, 0.05, 5),
        ("loose-8cyc", 0.05, 0.15, 0.05, 8),
    ] {
        let cfg = RefineConfig {
            merge_tol: merge, snap_tol: snap, pair_tol: pair, max_cycles: cycles,
            frame_policy: FramePolicy::Explicit(Frame::unit()),
            ..RefineConfig::default()
        };
        let group = SymmetryGroup::inversion();
        let mut valid_count = 0;
        let mut per_entry = vec![(0usize, 0usize); 6];
        for seed in 0..50u64 {
            let idx = (seed % 6) as usize;
            let (_, props, n) = &entry_info[idx];
            let coords = model.sample(props, *n, seed).unwrap();
            let edges = model.predict_adjacency(&coords, props);
            let vertices: Vec<Vec3> = (0..coords.nrows())
                .map(|i| Vec3::new(coords[(i, 0)], coords[(i, 1)], coords[(i, 2)]))
                .collect();
            let cell = UnitCell::new(vertices, edges);
            per_entry[idx].1 += 1;
            let ok = match refine(&cell, &cfg) {
                Ok((refined, _)) => validate_cell(&refined, 0.04, &group, &Frame::unit())
                    .map(|r| r.intra_valid && r.inter_valid).unwrap_or(false),
                Err(_) => false,
            };
            if ok { valid_count += 1; per_entry[idx].0 += 1; }
        }
        let breakdown: Vec<String> = entry_info.iter().zip(per_entry.iter())
            .map(|((name, _, _), (ok, total))| format!("{name} {ok}/{total}")).collect();
        println!("{label}: {valid_count}/50  [{}]", breakdown.join(", "));
    }
}
