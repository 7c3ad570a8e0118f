use nullpulse::null_state::{
    self as ns, csv_values, minkowski_snapshot, read_slab, slab_to_csv, write_slab, Comp, DoubleNullGrid, Slab, STORED,
};
use nullpulse::sphere_ops::{HorizontalField, Rank, SphereGrid};

fn small_slab() -> Slab {
    let g = DoubleNullGrid::uniform(10.0, 0.1, 0.5, 3, 5, 2).unwrap();
    let s = SphereGrid::new(4, 10.0).unwrap();
    Slab::minkowski(&g, &s).unwrap()
}

#[test]
fn minkowski_values() {
    let s = SphereGrid::new(4, 1.0).unwrap();
    let snap = minkowski_snapshot(1.0, 0.5, 10.0, &s).unwrap();
    let r = 9.5;
    assert_eq!(snap.radius(), r);
    let trchi = snap.field(Comp::TrChi).unwrap();
    assert!(trchi.data().iter().all(|v| (v - 2.0 / r).abs() < 1e-15));
    assert!(snap.trchib().data().iter().all(|v| (v + 2.0 / r).abs() < 1e-15));
    assert!(snap.gauss_k.data().iter().all(|v| (v - 1.0 / (r * r)).abs() < 1e-15));
    for c in [Comp::ChiHat, Comp::Alpha, Comp::Rho, Comp::AlphaF, Comp::Eta] {
        assert_eq!(snap.field(c).unwrap().max_abs(), 0.0, "{}", c.name());
    }
    assert!(ns::validate(&snap).is_empty());
    assert!(minkowski_snapshot(11.0, 0.0, 10.0, &s).is_err());
}

#[test]
fn grid_checks() {
    assert!(DoubleNullGrid::uniform(10.0, 0.0, 1.0, 3, 8, 2).is_err());
    assert!(DoubleNullGrid::uniform(10.0, 2.0, 1.0, 3, 8, 2).is_err());
    assert!(DoubleNullGrid::uniform(5.0, 0.1, 6.0, 3, 8, 2).is_err());
    assert!(DoubleNullGrid::new(vec![0.0, 0.0], vec![0.0, 0.1], 10.0, 0.1).is_err());
    let g = DoubleNullGrid::uniform(10.0, 0.1, 1.0, 5, 11, 3).unwrap();
    assert_eq!(g.n_u(), 5);
    assert_eq!(g.n_ubar(), 14);
    assert!((g.ubar_nodes[3]).abs() < 1e-15);
    assert!((g.ubar_nodes[13] - 0.1).abs() < 1e-15);
}

#[test]
fn validate_flags_bad_fields() {
    let s = SphereGrid::new(4, 10.0).unwrap();
    let mut snap = minkowski_snapshot(0.0, 0.05, 10.0, &s).unwrap();
    snap.lapse = HorizontalField::constant_scalar(5.0, &s);
    let v = ns::validate(&snap);
    assert!(v.iter().any(|x| x.kind == "lapse_range"));

    let mut snap = minkowski_snapshot(0.0, 0.05, 10.0, &s).unwrap();
    let mut d = vec![0.0; 3 * s.n_nodes()];
    d[0] = 1.0;
    d[2] = 1.0;
    *snap.get_mut(Comp::ChiHat).unwrap() = HorizontalField::from_data(Rank::Sym2, &s, d).unwrap();
    assert!(ns::validate(&snap).iter().any(|x| x.kind == "trace"));

    let mut snap = minkowski_snapshot(0.0, -0.01, 10.0, &s).unwrap();
    *snap.get_mut(Comp::Rho).unwrap() = HorizontalField::constant_scalar(1e-6, &s);
    assert!(ns::validate(&snap).iter().any(|x| x.kind == "flat_region"));
}

#[test]
fn slab_round_trip_is_bit_exact() {
    let mut slab = small_slab();
    // nontrivial content
    for (k, snap) in slab.snaps.iter_mut().enumerate() {
        let s = snap.sphere.clone();
        snap.set(Comp::Rho, HorizontalField::scalar_from_fn(&s, |p| p[2] * k as f64 + 0.1)).unwrap();
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.slab");
    let cfg = serde_json::json!({"seed": 3});
    write_slab(&path, &slab, &cfg).unwrap();
    let (back, header) = read_slab(&path).unwrap();
    assert_eq!(header.config, cfg);
    assert_eq!(header.components.len(), STORED.len());
    assert_eq!(back.grid, slab.grid);
    for (a, b) in slab.snaps.iter().zip(&back.snaps) {
        for c in STORED {
            let (fa, fb) = (a.get(c).unwrap(), b.get(c).unwrap());
            assert_eq!(fa.rank, fb.rank);
            assert!(fa.data().iter().zip(fb.data()).all(|(x, y)| x.to_bits() == y.to_bits()), "{}", c.name());
        }
    }
    std::fs::write(&path, b"garbage").unwrap();
    assert!(read_slab(&path).is_err());
}

#[test]
fn csv_export_parses() {
    let slab = small_slab();
    let mut buf = Vec::new();
    slab_to_csv(&slab, &mut buf).unwrap();
    let (cols, rows) = csv_values(std::str::from_utf8(&buf).unwrap()).unwrap();
    assert!(cols.iter().any(|c| c == "u") && cols.iter().any(|c| c == "ubar"));
    let n = slab.sphere().n_nodes() * slab.snaps.len();
    assert_eq!(rows.len(), n);
    assert!(rows.iter().all(|r| r.len() == cols.len() && r.iter().all(|v| v.is_finite())));
}

#[test]
fn component_names_round_trip() {
    for c in STORED {
        assert_eq!(Comp::from_name(c.name()).unwrap(), c);
    }
    assert!(Comp::from_name("nope").is_err());
}
