//! Slab container files and CSV export.
//!
//! Layout: the 8-byte magic `NPSLAB1\n`, a little-endian u64 header length,
//! the JSON header, then for every snapshot (row-major in (u, ubar)) and every
//! component in header order, the component's node values as little-endian
//! IEEE-754 f64, component-major within a field.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    Comp, ConnectionCoeffs, DoubleNullGrid, FieldSnapshot, MaxwellComponents, Slab, StateError,
    WeylComponents, STORED,
};
use crate::sphere_ops::{HorizontalField, Rank, SphereGrid};

pub const SLAB_MAGIC: &[u8; 8] = b"NPSLAB1\n";

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ComponentInfo {
    pub name: String,
    pub rank: Rank,
    pub n_comp: usize,
    pub units: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SlabHeader {
    pub format: String,
    pub version: u32,
    pub l_max: usize,
    pub n_theta: usize,
    pub n_phi: usize,
    pub n_nodes: usize,
    pub grid: DoubleNullGrid,
    pub components: Vec<ComponentInfo>,
    pub byte_order: String,
    /// Resolved run configuration, embedded verbatim.
    #[serde(default)]
    pub config: serde_json::Value,
}

fn header_for(slab: &Slab, config: &serde_json::Value) -> SlabHeader {
    let ang = &slab.sphere().angular;
    SlabHeader {
        format: "nullpulse-slab".into(),
        version: 1,
        l_max: ang.l_max,
        n_theta: ang.n_theta,
        n_phi: ang.n_phi,
        n_nodes: ang.n_nodes(),
        grid: slab.grid.clone(),
        components: STORED
            .iter()
            .map(|c| ComponentInfo {
                name: c.name().into(),
                rank: c.rank(),
                n_comp: c.rank().n_comp(),
                units: c.units().into(),
            })
            .collect(),
        byte_order: "little_endian_f64".into(),
        config: config.clone(),
    }
}

pub fn write_slab(path: &Path, slab: &Slab, config: &serde_json::Value) -> Result<(), StateError> {
    let header = serde_json::to_vec(&header_for(slab, config))?;
    let mut buf = Vec::new();
    buf.extend_from_slice(SLAB_MAGIC);
    buf.extend_from_slice(&(header.len() as u64).to_le_bytes());
    buf.extend_from_slice(&header);
    for snap in &slab.snaps {
        for c in STORED {
            for v in snap.get(c).expect("stored").data() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

pub fn read_slab(path: &Path) -> Result<(Slab, SlabHeader), StateError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 16 || &bytes[..8] != SLAB_MAGIC {
        return Err(StateError::Format("missing slab magic".into()));
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let hend = 16 + hlen;
    if bytes.len() < hend {
        return Err(StateError::Format("truncated header".into()));
    }
    let header: SlabHeader = serde_json::from_slice(&bytes[16..hend])?;
    let comps: Vec<Comp> = header
        .components
        .iter()
        .map(|ci| Comp::from_name(&ci.name))
        .collect::<Result<_, _>>()?;
    if comps != STORED.to_vec() {
        return Err(StateError::Format("unexpected component list".into()));
    }
    let base = SphereGrid::new(header.l_max, header.grid.r0)?;
    if base.n_nodes() != header.n_nodes {
        return Err(StateError::Format("node count does not match the band limit".into()));
    }
    let grid = header.grid.clone();
    let n = header.n_nodes;
    let per_snap: usize = STORED.iter().map(|c| c.rank().n_comp() * n).sum();
    let n_snaps = grid.n_u() * grid.n_ubar();
    if bytes.len() != hend + 8 * per_snap * n_snaps {
        return Err(StateError::Format(format!(
            "payload has {} bytes, expected {}",
            bytes.len() - hend,
            8 * per_snap * n_snaps
        )));
    }
    let mut pos = hend;
    let mut snaps = Vec::with_capacity(n_snaps);
    for &u in &grid.u_nodes {
        for &ub in &grid.ubar_nodes {
            let sphere = base.with_radius(grid.radius(u, ub))?;
            let mut fields = Vec::with_capacity(STORED.len());
            for c in STORED {
                let len = c.rank().n_comp() * n;
                let data: Vec<f64> = bytes[pos..pos + 8 * len]
                    .chunks_exact(8)
                    .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
                    .collect();
                pos += 8 * len;
                fields.push(HorizontalField::from_data(c.rank(), &sphere, data)?);
            }
            snaps.push(assemble(u, ub, sphere, fields));
        }
    }
    Ok((Slab { grid, snaps }, header))
}

fn assemble(u: f64, ubar: f64, sphere: SphereGrid, fields: Vec<HorizontalField>) -> FieldSnapshot {
    let mut it = fields.into_iter();
    let mut next = || it.next().expect("component count checked");
    let coeffs = ConnectionCoeffs {
        trchi: next(),
        chihat: next(),
        trchib_tilde: next(),
        chibhat: next(),
        eta: next(),
        etab: next(),
        omega: next(),
        omegab: next(),
        omega_dag: next(),
        omegab_dag: next(),
    };
    let weyl = WeylComponents {
        alpha: next(),
        beta: next(),
        rho: next(),
        sigma: next(),
        betab: next(),
        alphab: next(),
    };
    let maxwell = MaxwellComponents { alpha_f: next(), rho_f: next(), sigma_f: next(), alphab_f: next() };
    let lapse = next();
    let gauss_k = next();
    FieldSnapshot { u, ubar, sphere, coeffs, weyl, maxwell, lapse, gauss_k }
}

fn column_names() -> Vec<String> {
    let mut cols: Vec<String> = ["u", "ubar", "r", "node", "theta", "phi"].iter().map(|s| s.to_string()).collect();
    for c in STORED {
        match c.rank() {
            Rank::Scalar => cols.push(c.name().into()),
            Rank::OneForm => {
                cols.push(format!("{}_1", c.name()));
                cols.push(format!("{}_2", c.name()));
            }
            Rank::Sym2Traceless => {
                cols.push(format!("{}_11", c.name()));
                cols.push(format!("{}_12", c.name()));
            }
            Rank::Sym2 => unreachable!("no general symmetric component is stored"),
        }
    }
    cols
}

/// Long-format CSV: one row per (snapshot, node), one column per stored
/// component entry. Values use the shortest round-tripping decimal form.
pub fn slab_to_csv<W: Write>(slab: &Slab, out: W) -> Result<(), StateError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(column_names()).map_err(|e| StateError::Format(e.to_string()))?;
    for snap in &slab.snaps {
        let ang = &snap.sphere.angular;
        for i in 0..ang.n_nodes() {
            let (j, k) = (i / ang.n_phi, i % ang.n_phi);
            let mut row = vec![
                snap.u.to_string(),
                snap.ubar.to_string(),
                snap.sphere.radius.to_string(),
                i.to_string(),
                ang.theta[j].to_string(),
                ang.phi[k].to_string(),
            ];
            for c in STORED {
                let f = snap.get(c).unwrap();
                for cc in 0..c.rank().n_comp() {
                    row.push(f.comp(cc)[i].to_string());
                }
            }
            w.write_record(&row).map_err(|e| StateError::Format(e.to_string()))?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Parse the CSV export back into component values, keyed like the columns.
pub fn csv_values(text: &str) -> Result<(Vec<String>, Vec<Vec<f64>>), StateError> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let cols: Vec<String> = r
        .headers()
        .map_err(|e| StateError::Format(e.to_string()))?
        .iter()
        .map(String::from)
        .collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| StateError::Format(e.to_string()))?;
        rows.push(
            rec.iter()
                .map(|s| s.parse::<f64>().map_err(|e| StateError::Format(e.to_string())))
                .collect::<Result<Vec<_>, _>>()?,
        );
    }
    Ok((cols, rows))
}
