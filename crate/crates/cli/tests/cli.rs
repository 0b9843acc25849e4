use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use pnmm_core::io::{
    read_container, read_header, write_container, ContainerHeader, ContentKind, Manifest,
};

const SMALL: &str = r#"
grid_dims = [16, 16, 16]

[truth]
epsilon = 1e-6
max_iters = 40
b_bounds = { lo = -1.0, hi = 1.0 }
eta = 0.5
lambda = 0.5

[geometry]
white_semi_axes = [0.4, 0.4, 0.4]
vessel_radius = 2.0
vessel_center = [0.5, 0.12]
lesion_radius = 1.0
seed = 7
"#;

fn pnmm(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pnmm"))
        .args(args)
        .current_dir(cwd)
        .env("PNMM_LOG", "error")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn scratch(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR"))
        .join("pnmm-cli")
        .join(name);
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

/// Small phantom plus a short unmixing run, shared by the read-only tests.
struct Fixture {
    dir: PathBuf,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let dir = scratch("fixture");
        fs::write(dir.join("small.toml"), SMALL).unwrap();
        ok(&pnmm(
            &[
                "phantom",
                "--config",
                "small.toml",
                "--out",
                "ph",
                "--seed",
                "3",
            ],
            &dir,
        ));
        ok(&pnmm(
            &[
                "unmix",
                "--input",
                "ph/noisy",
                "--out",
                "un",
                "--max-iters",
                "60",
            ],
            &dir,
        ));
        Fixture { dir }
    })
}

fn data_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().unwrap() != "manifest.toml" {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.push((rel, fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn read_ppm(path: &Path) -> (usize, usize, Vec<u8>) {
    let bytes = fs::read(path).unwrap();
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        fields.push(String::from_utf8(bytes[start..pos].to_vec()).unwrap());
    }
    assert_eq!(fields[0], "P6");
    let (w, h): (usize, usize) = (fields[1].parse().unwrap(), fields[2].parse().unwrap());
    let pixels = bytes[pos + 1..].to_vec();
    assert_eq!(pixels.len(), 3 * w * h);
    (w, h, pixels)
}

#[test]
fn phantom_is_deterministic() {
    let dir = scratch("determinism");
    fs::write(dir.join("small.toml"), SMALL).unwrap();
    for out in ["a", "b"] {
        ok(&pnmm(
            &[
                "phantom",
                "--config",
                "small.toml",
                "--out",
                out,
                "--seed",
                "9",
            ],
            &dir,
        ));
    }
    let a = data_files(&dir.join("a"));
    assert!(a.len() > 10);
    assert_eq!(a, data_files(&dir.join("b")));
    let ma = Manifest::read(&dir.join("a/manifest.toml")).unwrap();
    let mb = Manifest::read(&dir.join("b/manifest.toml")).unwrap();
    assert_eq!(ma.outputs, mb.outputs);
    assert_eq!(ma.config_hash, mb.config_hash);
}

#[test]
fn manifest_checksums_match_files() {
    let f = fixture();
    for run in ["ph", "un"] {
        let m = Manifest::read(&f.dir.join(run).join("manifest.toml")).unwrap();
        assert!(!m.outputs.is_empty());
        for entry in &m.outputs {
            let digest = pnmm_core::io::sha256_file(&f.dir.join(run).join(&entry.file)).unwrap();
            assert_eq!(digest, entry.sha256, "{run}/{}", entry.file);
        }
    }
}

#[test]
fn missing_field_is_named() {
    let dir = scratch("missing");
    fs::write(dir.join("bad.toml"), "snr_db = 20.0\n").unwrap();
    let out = pnmm(&["phantom", "--config", "bad.toml", "--out", "ph"], &dir);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("grid_dims"));
    assert!(!dir.join("ph").exists());
}

#[test]
fn unknown_field_is_a_usage_error() {
    let dir = scratch("unknown");
    fs::write(
        dir.join("bad.toml"),
        format!("{SMALL}\n[solver]\neta = 1.0\n"),
    )
    .unwrap();
    let out = pnmm(&["phantom", "--config", "bad.toml", "--out", "ph"], &dir);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn default_grid_and_timeline_in_headers() {
    // Everything at its default except a short truth pass.
    let dir = scratch("defaults");
    fs::write(dir.join("d.toml"), "grid_dims = [32, 32, 16]\n[truth]\nmax_iters = 3\nepsilon = 1e-6\nb_bounds = { lo = -1.0, hi = 1.0 }\neta = 0.5\nlambda = 0.5\n").unwrap();
    ok(&pnmm(
        &["phantom", "--config", "d.toml", "--out", "ph"],
        &dir,
    ));
    for stem in ["noisy", "noiseless"] {
        let h = read_header(&dir.join("ph").join(stem)).unwrap();
        assert_eq!(h.kind, ContentKind::DynamicImage);
        assert_eq!(h.grid_dims, Some([32, 32, 16]));
        assert_eq!(h.shape, vec![27, 32 * 32 * 16]);
        assert_eq!(h.frame_mid_times.as_ref().map(Vec::len), Some(27));
    }
}

#[test]
fn unmix_writes_all_estimates() {
    let f = fixture();
    let un = f.dir.join("un");
    for stem in ["m", "a", "b", "alpha", "r1", "bp", "init/m", "init/a"] {
        assert!(un.join(format!("{stem}.json")).exists(), "{stem}");
        assert!(un.join(format!("{stem}.f32")).exists(), "{stem}");
    }
    let trace = fs::read_to_string(un.join("trace.csv")).unwrap();
    let objective: Vec<f64> = trace
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert!(objective.len() > 2);
    for w in objective.windows(2) {
        assert!(w[1] <= w[0] * (1.0 + 1e-9), "{} -> {}", w[0], w[1]);
    }
}

#[test]
fn max_iters_one_gives_one_iteration() {
    let f = fixture();
    let out_dir = scratch("one-iter");
    let input = f.dir.join("ph/noisy");
    ok(&pnmm(
        &[
            "unmix",
            "--input",
            input.to_str().unwrap(),
            "--out",
            "un",
            "--max-iters",
            "1",
        ],
        &out_dir,
    ));
    let trace = fs::read_to_string(out_dir.join("un/trace.csv")).unwrap();
    let iterations: Vec<&str> = trace
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap())
        .collect();
    assert_eq!(iterations, ["0", "1"]);
}

#[test]
fn depict_writes_maps_only() {
    let f = fixture();
    ok(&pnmm(
        &[
            "unmix",
            "--input",
            "ph/noisy",
            "--method",
            "depict",
            "--reference",
            "ph/truth/m",
            "--out",
            "dp",
        ],
        &f.dir,
    ));
    let mut files: Vec<String> = fs::read_dir(f.dir.join("dp"))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    files.sort();
    assert_eq!(
        files,
        ["bp.f32", "bp.json", "manifest.toml", "r1.f32", "r1.json"]
    );
    let h = read_header(&f.dir.join("dp/bp")).unwrap();
    assert_eq!(h.kind, ContentKind::BpMap);
    assert_eq!(h.shape, vec![1, 16 * 16 * 16]);
}

#[test]
fn depict_without_reference_is_a_usage_error() {
    let f = fixture();
    let out = pnmm(
        &[
            "unmix", "--input", "ph/noisy", "--method", "depict", "--out", "dp-none",
        ],
        &f.dir,
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--reference"));
}

fn table_rows(table: &str) -> (Vec<String>, Vec<String>) {
    let mut lines = table.lines();
    let header: Vec<String> = lines
        .next()
        .unwrap()
        .split_whitespace()
        .map(String::from)
        .collect();
    let rows = lines
        .take(5)
        .map(|l| l.split_whitespace().next().unwrap().to_string())
        .collect();
    (header, rows)
}

#[test]
fn eval_truth_against_itself_is_zero() {
    let f = fixture();
    ok(&pnmm(
        &[
            "eval",
            "--estimates",
            "ph/truth",
            "--truth",
            "ph/truth",
            "--out",
            "ev-self",
        ],
        &f.dir,
    ));
    let csv = fs::read_to_string(f.dir.join("ev-self/report.csv")).unwrap();
    for line in csv.lines().skip(1) {
        let mean: f64 = line.split(',').nth(2).unwrap().parse().unwrap();
        assert_eq!(mean, 0.0, "{line}");
    }
}

#[test]
fn eval_table_layout() {
    let f = fixture();
    ok(&pnmm(
        &[
            "eval",
            "--estimates",
            "un",
            "--truth",
            "ph/truth",
            "--out",
            "ev",
        ],
        &f.dir,
    ));
    let table = fs::read_to_string(f.dir.join("ev/table.txt")).unwrap();
    let (header, rows) = table_rows(&table);
    assert_eq!(header, ["Initial", "PNMM"]);
    assert_eq!(rows, ["A", "M", "R1", "alpha", "BP.fT"]);
    let csv = fs::read_to_string(f.dir.join("ev/report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 5 * 2);
}

#[test]
fn eval_init_only_has_one_column() {
    let f = fixture();
    ok(&pnmm(
        &[
            "unmix",
            "--input",
            "ph/noisy",
            "--out",
            "un-init",
            "--init-only",
        ],
        &f.dir,
    ));
    assert!(!f.dir.join("un-init/m.json").exists());
    ok(&pnmm(
        &[
            "eval",
            "--estimates",
            "un-init",
            "--truth",
            "ph/truth",
            "--out",
            "ev-init",
        ],
        &f.dir,
    ));
    let table = fs::read_to_string(f.dir.join("ev-init/table.txt")).unwrap();
    let (header, _) = table_rows(&table);
    assert_eq!(header, ["Initial"]);
}

#[test]
fn eval_shape_mismatch_names_variable() {
    let f = fixture();
    let dir = scratch("mismatch");
    fs::write(
        dir.join("other.toml"),
        SMALL.replace("[16, 16, 16]", "[16, 16, 18]"),
    )
    .unwrap();
    ok(&pnmm(
        &["phantom", "--config", "other.toml", "--out", "ph"],
        &dir,
    ));
    let est = f.dir.join("un");
    let out = pnmm(
        &[
            "eval",
            "--estimates",
            est.to_str().unwrap(),
            "--truth",
            "ph/truth",
            "--out",
            "ev",
        ],
        &dir,
    );
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("A has shape"), "{err}");
}

#[test]
fn slices_of_a_mask_are_binary() {
    let f = fixture();
    ok(&pnmm(
        &[
            "slices",
            "--volume",
            "ph/classes",
            "--axis",
            "z",
            "--index",
            "8",
            "--frame",
            "1",
            "--range",
            "0,1",
            "--out",
            "white.ppm",
        ],
        &f.dir,
    ));
    let (w, h, px) = read_ppm(&f.dir.join("white.ppm"));
    assert_eq!((w, h), (16, 16));
    assert!(px.iter().all(|&p| p == 0 || p == 255));
    assert!(px.contains(&0) && px.contains(&255));
}

#[test]
fn slices_of_a_constant_volume_are_white() {
    let dir = scratch("constant");
    let header = ContainerHeader::new(ContentKind::BpMap, vec![1, 4 * 5 * 3])
        .with_grid(pnmm_core::model::GridDims::new(4, 5, 3), [1.0; 3]);
    write_container(&dir.join("ones"), &header, &[1.0; 60]).unwrap();
    ok(&pnmm(
        &[
            "slices", "--volume", "ones", "--axis", "x", "--index", "2", "--range", "0,1", "--out",
            "ones.ppm",
        ],
        &dir,
    ));
    let (w, h, px) = read_ppm(&dir.join("ones.ppm"));
    assert_eq!((w, h), (5, 3));
    assert!(px.iter().all(|&p| p == 255));
}

#[test]
fn slices_out_of_range_index() {
    let f = fixture();
    let out = pnmm(
        &[
            "slices", "--volume", "ph/noisy", "--index", "16", "--out", "bad.ppm",
        ],
        &f.dir,
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(!f.dir.join("bad.ppm").exists());
}

#[test]
fn lesions_are_brightest_in_bp_slice() {
    let f = fixture();
    let (lh, lesions) = read_container(&f.dir.join("ph/lesions")).unwrap();
    let n = lh.shape[1];
    let dims = lh.dims().unwrap();
    // plane through a gray-matter lesion
    let v = (0..n).find(|&v| lesions[v] > 0.5).unwrap();
    let z = dims.coords(v).2;
    let out_name = "bp.ppm";
    ok(&pnmm(
        &[
            "slices",
            "--volume",
            "ph/truth/bp",
            "--axis",
            "z",
            "--index",
            &z.to_string(),
            "--frame",
            "0",
            "--out",
            out_name,
        ],
        &f.dir,
    ));
    let (w, _, px) = read_ppm(&f.dir.join(out_name));
    let max = px.iter().step_by(3).copied().max().unwrap();
    let mut brightest = 0;
    for (i, p) in px.chunks(3).enumerate() {
        if p[0] == max {
            let (x, y) = (i % w, i / w);
            let vox = x + dims.nx * (y + dims.ny * z);
            assert!(
                lesions[vox] > 0.5,
                "brightest pixel ({x},{y}) outside the lesions"
            );
            brightest += 1;
        }
    }
    assert!(brightest > 0);
}

#[test]
fn numerical_failure_exits_2_and_leaves_no_output() {
    let f = fixture();
    let dir = scratch("nan");
    let (mut h, mut x) = read_container(&f.dir.join("ph/noisy")).unwrap();
    x[100] = f64::NAN;
    h.config_hash = None;
    write_container(&dir.join("noisy"), &h, &x).unwrap();
    let classes = f.dir.join("ph/classes");
    let out = pnmm(
        &[
            "unmix",
            "--input",
            "noisy",
            "--masks",
            classes.to_str().unwrap(),
            "--out",
            "un",
        ],
        &dir,
    );
    assert_eq!(
        out.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(!dir.join("un").exists());
    let leftovers = fs::read_dir(&dir)
        .unwrap()
        .filter(|e| {
            e.as_ref()
                .unwrap()
                .file_name()
                .to_string_lossy()
                .starts_with(".pnmm-staging")
        })
        .count();
    assert_eq!(leftovers, 0);
}

#[test]
fn exit_codes_for_bad_invocations() {
    let dir = scratch("invocations");
    assert_eq!(pnmm(&["bogus"], &dir).status.code(), Some(1));
    assert_eq!(pnmm(&["unmix"], &dir).status.code(), Some(1));
    assert_eq!(pnmm(&["--help"], &dir).status.code(), Some(0));
    assert_eq!(
        pnmm(&["unmix", "--input", "missing", "--out", "x"], &dir)
            .status
            .code(),
        Some(1)
    );
}
