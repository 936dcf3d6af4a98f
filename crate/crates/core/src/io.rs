//! Raster and tabular output formats.
//!
//! Label grids are written as binary graymaps (P5) with the label as the pixel
//! value, scalar fields as raw little-endian `f32`, and both carry a small
//! `key = value` sidecar describing the grid. Colour previews are binary
//! pixmaps (P6). Every encoder is a pure function of its input so artifacts
//! can be hashed and compared byte for byte.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geom::{GridSpec, LabelGrid, ScalarField, Topology, UNASSIGNED};

/// Fixed palette for colour previews; labels cycle through it.
pub const PALETTE: [[u8; 3]; 12] = [
    [230, 25, 75],
    [60, 180, 75],
    [0, 130, 200],
    [255, 225, 25],
    [245, 130, 48],
    [145, 30, 180],
    [70, 240, 240],
    [240, 50, 230],
    [210, 245, 60],
    [250, 190, 212],
    [0, 128, 128],
    [170, 110, 40],
];

/// Rows are emitted top to bottom, i.e. from the largest `y` down.
fn rows_top_down(spec: &GridSpec) -> impl Iterator<Item = usize> {
    (0..spec.ny).rev()
}

/// Binary graymap of a label grid. Unassigned nodes take the maximum grey value.
pub fn label_pgm(lg: &LabelGrid) -> Result<Vec<u8>> {
    let spec = &lg.spec;
    let max_label = lg
        .labels
        .iter()
        .filter(|&&l| l != UNASSIGNED)
        .max()
        .copied()
        .unwrap_or(0);
    let wide = max_label >= 255;
    if max_label >= 65535 {
        return Err(Error::Image(format!("label {max_label} does not fit a 16-bit graymap")));
    }
    let maxval: u32 = if wide { 65535 } else { 255 };
    let mut out = format!("P5\n{} {}\n{}\n", spec.nx, spec.ny, maxval).into_bytes();
    for iy in rows_top_down(spec) {
        for ix in 0..spec.nx {
            let l = lg.label(ix, iy);
            let v = if l == UNASSIGNED { maxval } else { l };
            if wide {
                out.extend_from_slice(&(v as u16).to_be_bytes());
            } else {
                out.push(v as u8);
            }
        }
    }
    Ok(out)
}

fn next_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a str> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::Image("truncated header".into()));
    }
    std::str::from_utf8(&bytes[start..*pos]).map_err(|_| Error::Image("non-ascii header".into()))
}

fn parse_num(tok: &str) -> Result<usize> {
    tok.parse()
        .map_err(|_| Error::Image(format!("bad header field `{tok}`")))
}

/// Inverse of [`label_pgm`] for a known grid.
pub fn read_label_pgm(bytes: &[u8], spec: GridSpec) -> Result<LabelGrid> {
    let mut pos = 0;
    if next_token(bytes, &mut pos)? != "P5" {
        return Err(Error::Image("not a binary graymap".into()));
    }
    let nx = parse_num(next_token(bytes, &mut pos)?)?;
    let ny = parse_num(next_token(bytes, &mut pos)?)?;
    let maxval = parse_num(next_token(bytes, &mut pos)?)?;
    if nx != spec.nx || ny != spec.ny {
        return Err(Error::GridMismatch);
    }
    pos += 1;
    let wide = maxval > 255;
    let depth = if wide { 2 } else { 1 };
    let data = &bytes[pos..];
    if data.len() != nx * ny * depth {
        return Err(Error::Image(format!(
            "expected {} data bytes, got {}",
            nx * ny * depth,
            data.len()
        )));
    }
    let mut labels = vec![0u32; nx * ny];
    for (row, iy) in rows_top_down(&spec).enumerate() {
        for ix in 0..nx {
            let k = (row * nx + ix) * depth;
            let v = if wide {
                u16::from_be_bytes([data[k], data[k + 1]]) as u32
            } else {
                data[k] as u32
            };
            labels[spec.index(ix, iy)] = if v as usize == maxval { UNASSIGNED } else { v };
        }
    }
    Ok(LabelGrid {
        spec,
        labels,
        gaps: None,
    })
}

/// Colour pixmap with the fixed palette; unassigned nodes are black.
pub fn label_ppm(lg: &LabelGrid) -> Vec<u8> {
    let spec = &lg.spec;
    let mut out = format!("P6\n{} {}\n255\n", spec.nx, spec.ny).into_bytes();
    for iy in rows_top_down(spec) {
        for ix in 0..spec.nx {
            let l = lg.label(ix, iy);
            let rgb = if l == UNASSIGNED {
                [0, 0, 0]
            } else {
                PALETTE[l as usize % PALETTE.len()]
            };
            out.extend_from_slice(&rgb);
        }
    }
    out
}

/// Graymap with 255 at the listed nodes and 0 elsewhere.
pub fn mask_pgm(spec: &GridSpec, nodes: &[usize]) -> Vec<u8> {
    let mut mask = vec![0u8; spec.len()];
    for &n in nodes {
        mask[n] = 255;
    }
    let mut out = format!("P5\n{} {}\n255\n", spec.nx, spec.ny).into_bytes();
    for iy in rows_top_down(spec) {
        out.extend_from_slice(&mask[iy * spec.nx..(iy + 1) * spec.nx]);
    }
    out
}

/// Raw little-endian `f32` values, row-major with `y` ascending.
pub fn scalar_raw(field: &ScalarField) -> Vec<u8> {
    field.values.iter().flat_map(|&v| (v as f32).to_le_bytes()).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SidecarKind {
    LabelsPgm,
    ScalarF32,
}

/// `key = value` description accompanying a raster file.
pub fn sidecar(kind: SidecarKind, spec: &GridSpec, n_sites: usize, topology: Topology) -> String {
    let mut s = String::from("# pde-voronoi grid header\n");
    let (k, order) = match kind {
        SidecarKind::LabelsPgm => ("labels_pgm", "y_descending"),
        SidecarKind::ScalarF32 => ("scalar_f32_le", "y_ascending"),
    };
    let d = spec.domain;
    let _ = writeln!(s, "kind = {k}");
    let _ = writeln!(s, "nx = {}", spec.nx);
    let _ = writeln!(s, "ny = {}", spec.ny);
    let _ = writeln!(s, "n_sites = {n_sites}");
    let _ = writeln!(s, "domain = {} {} {} {}", d.x0, d.x1, d.y0, d.y1);
    let _ = writeln!(s, "topology = {}", topology.name());
    if let Topology::Torus { period } = topology {
        let _ = writeln!(s, "period = {period}");
    }
    let _ = writeln!(s, "row_order = {order}");
    if kind == SidecarKind::LabelsPgm {
        let _ = writeln!(s, "unassigned = maxval");
    }
    s
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct FileEntry {
    pub name: String,
    pub sha256: String,
}

/// Writes artifacts into one directory and remembers their hashes.
#[derive(Debug)]
pub struct ArtifactWriter {
    dir: PathBuf,
    files: Vec<FileEntry>,
}

impl ArtifactWriter {
    pub fn create(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        Ok(Self { dir, files: Vec::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        fs::write(self.dir.join(name), bytes)?;
        self.files.push(FileEntry {
            name: name.to_string(),
            sha256: sha256_hex(bytes),
        });
        Ok(())
    }

    pub fn write_labels(&mut self, stem: &str, lg: &LabelGrid, n_sites: usize, topology: Topology) -> Result<()> {
        self.write(&format!("{stem}.pgm"), &label_pgm(lg)?)?;
        let hdr = sidecar(SidecarKind::LabelsPgm, &lg.spec, n_sites, topology);
        self.write(&format!("{stem}.hdr"), hdr.as_bytes())
    }

    pub fn write_scalar(&mut self, stem: &str, f: &ScalarField, n_sites: usize, topology: Topology) -> Result<()> {
        self.write(&format!("{stem}.f32"), &scalar_raw(f))?;
        let hdr = sidecar(SidecarKind::ScalarF32, &f.spec, n_sites, topology);
        self.write(&format!("{stem}.hdr"), hdr.as_bytes())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.write(name, &bytes)
    }

    pub fn files(&self) -> &[FileEntry] {
        &self.files
    }

    pub fn into_files(self) -> Vec<FileEntry> {
        self.files
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Rect;
    use proptest::prelude::*;

    fn spec(nx: usize, ny: usize) -> GridSpec {
        GridSpec::new(nx, ny, Rect::new(0.0, nx as f64, 0.0, ny as f64).unwrap()).unwrap()
    }

    #[test]
    fn pgm_header_and_row_order() {
        let g = spec(2, 2);
        let lg = LabelGrid {
            spec: g,
            labels: vec![0, 1, 2, UNASSIGNED],
            gaps: None,
        };
        let bytes = label_pgm(&lg).unwrap();
        assert_eq!(&bytes[..11], b"P5\n2 2\n255\n");
        // top row is iy = 1
        assert_eq!(&bytes[11..], &[2, 255, 0, 1]);
    }

    #[test]
    fn uniform_grid_is_one_colour() {
        let lg = LabelGrid::filled(spec(3, 3), 0);
        let bytes = label_ppm(&lg);
        let body = &bytes[bytes.len() - 27..];
        assert!(body.chunks(3).all(|c| c == PALETTE[0]));
        assert_eq!(label_ppm(&lg), bytes);
    }

    #[test]
    fn sidecar_lists_grid() {
        let s = sidecar(SidecarKind::ScalarF32, &spec(4, 4), 3, Topology::Torus { period: 4.0 });
        assert!(s.contains("n_sites = 3"));
        assert!(s.contains("period = 4"));
        assert!(s.contains("domain = 0 4 0 4"));
    }

    proptest! {
        #[test]
        fn pgm_round_trip(nx in 2usize..9, ny in 2usize..9, seed in any::<u64>(), wide in any::<bool>()) {
            let g = spec(nx, ny);
            let top = if wide { 1000 } else { 7 };
            let labels: Vec<u32> = (0..g.len())
                .map(|i| {
                    let v = (seed.wrapping_mul(6364136223846793005).wrapping_add((i as u64).wrapping_mul(1442695040888963407)) >> 33) as u32 % (top + 1);
                    if v == top { UNASSIGNED } else { v }
                })
                .collect();
            let lg = LabelGrid { spec: g, labels, gaps: None };
            let back = read_label_pgm(&label_pgm(&lg).unwrap(), g).unwrap();
            prop_assert_eq!(back.labels, lg.labels);
        }
    }
}
