//! Text and image file formats.
//!
//! | file | layout |
//! |------|--------|
//! | intrinsics | one `key: value` or `key = value` per line, keys `fx fy s cx cy k1 k2 p1 p2 xi width height`, `#` comments |
//! | world file | 4 lines: resolution (m/px), origin x, origin y (center of pixel (0, 0)), `north-up` |
//! | LiDAR | CSV `x,y,z,reflectivity`, header optional |
//! | matches | CSV `u_rect,v_rect,u_sat,v_sat[,inlier]`, header optional |
//! | check points | CSV `x,y,z,u,v`, header optional |
//! | grid and slice dumps | CSV `x,y,z,psi,n,H_X,H_Y,H_XY,MI`, `psi` in radians, `MI = -inf` for cells with too few points |
//! | trials | CSV, one row per robustness trial |
//! | images | 8-bit grayscale PNG or PGM, chosen by extension |
//!
//! Floats are written in Rust's shortest round-trip notation so every value
//! reads back bit-identical.

use std::fs;
use std::io::Write;
use std::path::Path;

use infraloc_core::eval::CheckPoint;
use infraloc_core::pnp::{Correspondence, CorrespondenceSet};
use infraloc_core::synth::TrialOutcome;
use infraloc_core::{
    CameraIntrinsics, GpsInit, GrayImage, LidarGroundMap, LidarPoint, MiEvaluation, PriorMap,
    SatelliteMap, Vec3,
};

use crate::error::{Error, Result};

const INTRINSIC_KEYS: [&str; 12] = [
    "fx", "fy", "s", "cx", "cy", "k1", "k2", "p1", "p2", "xi", "width", "height",
];

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn parse_f64(path: &Path, field: &str, text: &str) -> Result<f64> {
    text.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| {
            Error::parse(
                path,
                format!("field `{field}`: `{text}` is not a finite number"),
            )
        })
}

fn parse_u32(path: &Path, field: &str, text: &str) -> Result<u32> {
    text.trim().parse::<u32>().map_err(|_| {
        Error::parse(
            path,
            format!("field `{field}`: `{text}` is not a non-negative integer"),
        )
    })
}

/// Parses the intrinsics document; `path` only labels errors.
pub fn parse_intrinsics(path: &Path, text: &str) -> Result<CameraIntrinsics> {
    let mut values: [Option<&str>; 12] = [None; 12];
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once(|c| c == ':' || c == '=') else {
            return Err(Error::parse(
                path,
                format!("line {}: expected `key: value`, got `{line}`", lineno + 1),
            ));
        };
        let key = key.trim();
        let Some(slot) = INTRINSIC_KEYS.iter().position(|k| *k == key) else {
            return Err(Error::parse(
                path,
                format!("line {}: unknown key `{key}`", lineno + 1),
            ));
        };
        if values[slot].replace(value.trim()).is_some() {
            return Err(Error::parse(path, format!("key `{key}` appears twice")));
        }
    }
    let get = |i: usize| {
        values[i]
            .ok_or_else(|| Error::parse(path, format!("missing field `{}`", INTRINSIC_KEYS[i])))
    };
    let mut f = [0.0; 10];
    for (i, v) in f.iter_mut().enumerate() {
        *v = parse_f64(path, INTRINSIC_KEYS[i], get(i)?)?;
    }
    let intr = CameraIntrinsics {
        fx: f[0],
        fy: f[1],
        s: f[2],
        cx: f[3],
        cy: f[4],
        k1: f[5],
        k2: f[6],
        p1: f[7],
        p2: f[8],
        xi: f[9],
        width: parse_u32(path, "width", get(10)?)?,
        height: parse_u32(path, "height", get(11)?)?,
    };
    intr.validate()?;
    Ok(intr)
}

pub fn read_intrinsics(path: &Path) -> Result<CameraIntrinsics> {
    parse_intrinsics(path, &read_text(path)?)
}

pub fn format_intrinsics(intr: &CameraIntrinsics) -> String {
    let f = [
        intr.fx, intr.fy, intr.s, intr.cx, intr.cy, intr.k1, intr.k2, intr.p1, intr.p2, intr.xi,
    ];
    let mut out = String::new();
    for (k, v) in INTRINSIC_KEYS.iter().zip(f) {
        out.push_str(&format!("{k}: {v}\n"));
    }
    out.push_str(&format!("width: {}\nheight: {}\n", intr.width, intr.height));
    out
}

pub fn write_intrinsics(path: &Path, intr: &CameraIntrinsics) -> Result<()> {
    write_bytes(path, format_intrinsics(intr).as_bytes())
}

/// Georeferencing of a north-up raster.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WorldFile {
    pub resolution: f64,
    pub origin: [f64; 2],
}

pub fn parse_world_file(path: &Path, text: &str) -> Result<WorldFile> {
    let lines: Vec<&str> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .collect();
    if lines.len() != 4 {
        return Err(Error::parse(
            path,
            format!(
                "expected 4 lines (resolution, origin_x, origin_y, axis tag), got {}",
                lines.len()
            ),
        ));
    }
    let resolution = parse_f64(path, "resolution_m_per_px", lines[0])?;
    if resolution <= 0.0 {
        return Err(Error::parse(
            path,
            "field `resolution_m_per_px` must be positive",
        ));
    }
    let origin = [
        parse_f64(path, "origin_x_m", lines[1])?,
        parse_f64(path, "origin_y_m", lines[2])?,
    ];
    if lines[3] != "north-up" {
        return Err(Error::parse(
            path,
            format!(
                "field `axis`: only `north-up` is supported, got `{}`",
                lines[3]
            ),
        ));
    }
    Ok(WorldFile { resolution, origin })
}

pub fn read_world_file(path: &Path) -> Result<WorldFile> {
    parse_world_file(path, &read_text(path)?)
}

pub fn format_world_file(resolution: f64, origin: [f64; 2]) -> String {
    format!("{resolution}\n{}\n{}\nnorth-up\n", origin[0], origin[1])
}

fn csv_records(path: &Path) -> Result<Vec<csv::StringRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| Error::parse(path, e.to_string()))?;
    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::parse(path, e.to_string()))?;
        // a first row that does not start with a number is a header
        if i == 0 && rec.get(0).is_some_and(|f| f.parse::<f64>().is_err()) {
            continue;
        }
        if rec.len() == 1 && rec.get(0) == Some("") {
            continue;
        }
        out.push(rec);
    }
    Ok(out)
}

fn row_f64(path: &Path, rec: &csv::StringRecord, names: &[&str]) -> Result<Vec<f64>> {
    let row = rec.position().map_or(0, |p| p.line());
    names
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let text = rec.get(i).ok_or_else(|| {
                Error::parse(path, format!("line {row}: missing column `{name}`"))
            })?;
            parse_f64(path, name, text).map_err(|_| {
                Error::parse(
                    path,
                    format!("line {row}: column `{name}`: `{text}` is not a finite number"),
                )
            })
        })
        .collect()
}

fn check_width(path: &Path, rec: &csv::StringRecord, allowed: &[usize]) -> Result<()> {
    if allowed.contains(&rec.len()) {
        Ok(())
    } else {
        let row = rec.position().map_or(0, |p| p.line());
        Err(Error::parse(
            path,
            format!(
                "line {row}: expected {allowed:?} columns, got {}",
                rec.len()
            ),
        ))
    }
}

pub fn read_lidar_csv(path: &Path) -> Result<Vec<LidarPoint>> {
    csv_records(path)?
        .iter()
        .map(|rec| {
            check_width(path, rec, &[4])?;
            let v = row_f64(path, rec, &["x", "y", "z"])?;
            let row = rec.position().map_or(0, |p| p.line());
            let refl: i64 = rec[3].parse().map_err(|_| {
                Error::parse(
                    path,
                    format!(
                        "line {row}: column `reflectivity`: `{}` is not an integer",
                        &rec[3]
                    ),
                )
            })?;
            LidarPoint::checked(v[0], v[1], v[2], refl)
                .map_err(|e| Error::parse(path, format!("line {row}: {e}")))
        })
        .collect()
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new().from_writer(Vec::new())
}

fn finish_csv(path: &Path, w: csv::Writer<Vec<u8>>) -> Result<()> {
    let bytes = w.into_inner().map_err(|e| Error::Invalid(e.to_string()))?;
    write_bytes(path, &bytes)
}

fn write_rows<const N: usize>(
    path: &Path,
    header: [&str; N],
    rows: impl Iterator<Item = [String; N]>,
) -> Result<()> {
    let mut w = csv_writer();
    let wrap = |e: csv::Error| Error::parse(path, e.to_string());
    w.write_record(header).map_err(wrap)?;
    for r in rows {
        w.write_record(&r).map_err(wrap)?;
    }
    finish_csv(path, w)
}

pub fn write_lidar_csv(path: &Path, points: &[LidarPoint]) -> Result<()> {
    write_rows(
        path,
        ["x", "y", "z", "reflectivity"],
        points.iter().map(|p| {
            [
                p.x.to_string(),
                p.y.to_string(),
                p.z.to_string(),
                p.reflectivity.to_string(),
            ]
        }),
    )
}

pub fn read_matches(path: &Path) -> Result<CorrespondenceSet> {
    let pairs = csv_records(path)?
        .iter()
        .map(|rec| {
            check_width(path, rec, &[4, 5])?;
            let v = row_f64(path, rec, &["u_rect", "v_rect", "u_sat", "v_sat"])?;
            let inlier = match rec.get(4) {
                None => None,
                Some("1") | Some("true") => Some(true),
                Some("0") | Some("false") => Some(false),
                Some(other) => {
                    let row = rec.position().map_or(0, |p| p.line());
                    return Err(Error::parse(
                        path,
                        format!("line {row}: column `inlier`: `{other}` is not 0/1"),
                    ));
                }
            };
            Ok(Correspondence {
                rect: [v[0], v[1]],
                sat: [v[2], v[3]],
                inlier,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CorrespondenceSet::new(pairs)?)
}

/// Writes the `inlier` column only when every match carries a label.
pub fn write_matches(path: &Path, set: &CorrespondenceSet) -> Result<()> {
    let labelled = !set.is_empty() && set.pairs.iter().all(|c| c.inlier.is_some());
    let mut w = csv_writer();
    let wrap = |e: csv::Error| Error::parse(path, e.to_string());
    let mut header = vec!["u_rect", "v_rect", "u_sat", "v_sat"];
    if labelled {
        header.push("inlier");
    }
    w.write_record(&header).map_err(wrap)?;
    for c in &set.pairs {
        let mut row = vec![
            c.rect[0].to_string(),
            c.rect[1].to_string(),
            c.sat[0].to_string(),
            c.sat[1].to_string(),
        ];
        if let (true, Some(l)) = (labelled, c.inlier) {
            row.push(u8::from(l).to_string());
        }
        w.write_record(&row).map_err(wrap)?;
    }
    finish_csv(path, w)
}

pub fn read_checkpoints(path: &Path) -> Result<Vec<CheckPoint>> {
    csv_records(path)?
        .iter()
        .map(|rec| {
            check_width(path, rec, &[5])?;
            let v = row_f64(path, rec, &["x", "y", "z", "u", "v"])?;
            Ok(CheckPoint {
                world: Vec3::new(v[0], v[1], v[2]),
                pixel: [v[3], v[4]],
            })
        })
        .collect()
}

pub fn write_checkpoints(path: &Path, checks: &[CheckPoint]) -> Result<()> {
    write_rows(
        path,
        ["x", "y", "z", "u", "v"],
        checks.iter().map(|c| {
            [
                c.world.x.to_string(),
                c.world.y.to_string(),
                c.world.z.to_string(),
                c.pixel[0].to_string(),
                c.pixel[1].to_string(),
            ]
        }),
    )
}

pub fn write_evaluations(path: &Path, evaluations: &[MiEvaluation]) -> Result<()> {
    write_rows(
        path,
        ["x", "y", "z", "psi", "n", "H_X", "H_Y", "H_XY", "MI"],
        evaluations.iter().map(|e| {
            [
                e.theta.x.to_string(),
                e.theta.y.to_string(),
                e.theta.z.to_string(),
                e.theta.yaw.to_string(),
                e.n_points.to_string(),
                e.h_x.to_string(),
                e.h_y.to_string(),
                e.h_xy.to_string(),
                e.mi.to_string(),
            ]
        }),
    )
}

/// Initial and refined `[x, y, z, psi]`, signed errors, translation error, MI
/// and a 0/1 convergence flag per trial.
pub fn write_trials(path: &Path, outcomes: &[TrialOutcome]) -> Result<()> {
    write_rows(
        path,
        [
            "trial",
            "x0",
            "y0",
            "z0",
            "psi0",
            "x",
            "y",
            "z",
            "psi",
            "dx",
            "dy",
            "dz",
            "dpsi",
            "translation_error",
            "MI",
            "converged",
        ],
        outcomes.iter().map(|o| {
            let (a, b) = (o.initial.to_array(), o.refined.to_array());
            [
                o.index.to_string(),
                a[0].to_string(),
                a[1].to_string(),
                a[2].to_string(),
                a[3].to_string(),
                b[0].to_string(),
                b[1].to_string(),
                b[2].to_string(),
                b[3].to_string(),
                o.error[0].to_string(),
                o.error[1].to_string(),
                o.error[2].to_string(),
                o.error[3].to_string(),
                o.translation_error.to_string(),
                o.mi.to_string(),
                u8::from(o.converged).to_string(),
            ]
        }),
    )
}

/// `x,y,r` as given to `--gps-init`.
pub fn parse_gps_init(text: &str) -> std::result::Result<GpsInit, String> {
    let v: Vec<f64> = text
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| format!("expected `x,y,radius`, got `{text}`"))?;
    if v.len() != 3 {
        return Err(format!("expected `x,y,radius`, got `{text}`"));
    }
    GpsInit::new(v[0], v[1], v[2]).map_err(|e| e.to_string())
}

pub fn format_gps_init(gps: &GpsInit) -> String {
    format!("{},{},{}", gps.x, gps.y, gps.search_radius)
}

pub fn read_gray_image(path: &Path) -> Result<GrayImage> {
    let img = image::ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?
        .decode()
        .map_err(|e| Error::Image {
            path: path.to_path_buf(),
            source: e,
        })?;
    if !matches!(img.color(), image::ColorType::L8) {
        return Err(Error::parse(
            path,
            format!("expected an 8-bit grayscale image, got {:?}", img.color()),
        ));
    }
    let gray = img.into_luma8();
    let (w, h) = gray.dimensions();
    Ok(GrayImage::from_raw(w, h, gray.into_raw())?)
}

fn image_format(path: &Path) -> Result<image::ImageFormat> {
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .as_deref()
    {
        Some("png") => Ok(image::ImageFormat::Png),
        Some("pgm") | Some("pnm") => Ok(image::ImageFormat::Pnm),
        _ => Err(Error::parse(path, "image files must end in .png or .pgm")),
    }
}

pub fn write_gray_image(path: &Path, img: &GrayImage) -> Result<()> {
    let format = image_format(path)?;
    let buf = image::GrayImage::from_raw(img.width(), img.height(), img.as_raw().to_vec())
        .ok_or_else(|| Error::Invalid("image buffer size".into()))?;
    encode(path, image::DynamicImage::ImageLuma8(buf), format)
}

pub fn write_rgb_image(path: &Path, img: &image::RgbImage) -> Result<()> {
    let format = image_format(path)?;
    let format = if format == image::ImageFormat::Pnm {
        return Err(Error::parse(path, "color images are written as .png"));
    } else {
        format
    };
    encode(path, image::DynamicImage::ImageRgb8(img.clone()), format)
}

fn encode(path: &Path, img: image::DynamicImage, format: image::ImageFormat) -> Result<()> {
    let mut bytes = std::io::Cursor::new(Vec::new());
    if format == image::ImageFormat::Pnm {
        // binary PGM
        let enc = image::codecs::pnm::PnmEncoder::new(&mut bytes).with_subtype(
            image::codecs::pnm::PnmSubtype::Graymap(image::codecs::pnm::SampleEncoding::Binary),
        );
        img.write_with_encoder(enc)
    } else {
        img.write_to(&mut bytes, format)
    }
    .map_err(|e| Error::Image {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes.get_ref()).map_err(|e| Error::io(path, e))
}

/// Satellite raster + world file + LiDAR CSV.
pub fn load_prior_map(satellite: &Path, world_file: &Path, lidar: &Path) -> Result<PriorMap> {
    let raster = read_gray_image(satellite)?;
    let wf = read_world_file(world_file)?;
    let sat = SatelliteMap::new(raster, wf.resolution, wf.origin)
        .map_err(|e| Error::parse(satellite, e.to_string()))?;
    let points = read_lidar_csv(lidar)?;
    let lidar_map = LidarGroundMap::new(points).map_err(|e| Error::parse(lidar, e.to_string()))?;
    Ok(PriorMap {
        satellite: sat,
        lidar: lidar_map,
    })
}
