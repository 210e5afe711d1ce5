//! End-to-end tests of the `sacsim` binary: the exit-code contract, report
//! formats, golden packing, the oracle diff, and fault injection.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;

use sacsim::packer::PackedLayer;
use sacsim::scheduler::{InstrKind, Program};

struct Output {
    status: i32,
    stdout: String,
    stderr: String,
}

fn sacsim(dir: &Path, args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_sacsim"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("the binary runs");
    Output {
        status: out.status.code().expect("terminated by signal"),
        stdout: String::from_utf8(out.stdout).expect("stdout is UTF-8"),
        stderr: String::from_utf8(out.stderr).expect("stderr is UTF-8"),
    }
}

fn json(out: &Output) -> Value {
    serde_json::from_str(&out.stdout)
        .unwrap_or_else(|e| panic!("stdout is not JSON ({e}): {}", out.stdout))
}

fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../sacsim/tests/golden")
        .join(name)
}

/// Generates the seed-4 tiny model (known to produce non-zero logits) and
/// compiles it for an 8x8 array. Returns the scratch directory.
fn tiny_pipeline() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let gen = sacsim(
        dir.path(),
        &[
            "gen",
            "--seed",
            "4",
            "--preset",
            "tiny",
            "--out",
            "model.json",
            "--input-out",
            "img.tensor",
            "--zero-fraction",
            "0.1",
        ],
    );
    assert_eq!(gen.status, 0, "{}", gen.stderr);
    let compile = sacsim(
        dir.path(),
        &[
            "compile",
            "model.json",
            "--array",
            "8x8",
            "--out",
            "model.sacp",
        ],
    );
    assert_eq!(compile.status, 0, "{}", compile.stderr);
    dir
}

#[test]
fn packs_the_golden_model_byte_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let model = golden("model.json");
    let out = sacsim(
        dir.path(),
        &["pack", model.to_str().unwrap(), "--out", "packed.bin"],
    );
    assert_eq!(out.status, 0, "{}", out.stderr);

    let report = json(&out);
    assert_eq!(report["total_dropped"], 0);
    assert_eq!(report["layers"][0]["packed_cols"], 2);

    let packed = fs::read(dir.path().join("packed.bin")).unwrap();
    let expect = fs::read(golden("packed.bin")).unwrap();
    assert_eq!(
        packed, expect,
        "CLI packing must reproduce the golden bytes"
    );
}

#[test]
fn pack_reports_dropped_weights_with_warning_status() {
    let dir = tempfile::tempdir().unwrap();
    // Two non-zero weights in row 0's single group of two: one must drop.
    fs::write(
        dir.path().join("dense.json"),
        r#"{
            "input_shape": [2, 2, 2],
            "reshape_factor": 1,
            "layers": [
                {
                    "f": 2, "c": 2, "s": 1, "g": 2,
                    "weights": [
                        {"row": 0, "col": 0, "sign": 1, "exp": 0},
                        {"row": 0, "col": 1, "sign": -1, "exp": -1},
                        {"row": 1, "col": 0, "sign": 1, "exp": -2}
                    ],
                    "bn": {"scale_exp": 0, "bias_fx": 0}
                }
            ],
            "fc": {
                "classes": 2, "c": 2, "g": 1,
                "weights": [
                    {"row": 0, "col": 0, "sign": 1, "exp": 0},
                    {"row": 1, "col": 1, "sign": 1, "exp": 0}
                ]
            }
        }"#,
    )
    .unwrap();

    let out = sacsim(dir.path(), &["pack", "dense.json", "--out", "dense.bin"]);
    assert_eq!(out.status, 4, "dropping weights is a warning status");
    assert!(
        out.stderr.contains("dropped 1 non-zero weight"),
        "{}",
        out.stderr
    );
    let report = json(&out);
    assert_eq!(report["total_dropped"], 1);
    assert_eq!(report["layers"][0]["dropped"], 1);
    assert_eq!(report["layers"][0]["kept"], 2, "the larger weight survives");

    // The output is still written and still parses: the first block is the
    // 2x1 convolution (8-byte header + 2 cells + 2 biases).
    let blob = fs::read(dir.path().join("dense.bin")).unwrap();
    let conv = PackedLayer::from_bytes(&blob[..18]).unwrap();
    assert_eq!((conv.rows, conv.cols), (2, 1));
}

#[test]
fn exit_codes_separate_usage_validation_and_success() {
    let dir = tempfile::tempdir().unwrap();

    assert_eq!(sacsim(dir.path(), &["--help"]).status, 0);
    assert_eq!(
        sacsim(dir.path(), &["simulate", "--bogus"]).status,
        1,
        "unknown flag"
    );
    assert_eq!(sacsim(dir.path(), &[]).status, 1, "missing subcommand");
    assert_eq!(
        sacsim(
            dir.path(),
            &["compile", "m.json", "--array", "bogus", "--out", "x"]
        )
        .status,
        1,
        "malformed array geometry"
    );

    assert_eq!(
        sacsim(dir.path(), &["simulate", "missing.sacp", "missing.tensor"]).status,
        2,
        "missing input files"
    );
    fs::write(dir.path().join("bad.json"), "not json").unwrap();
    assert_eq!(
        sacsim(
            dir.path(),
            &["compile", "bad.json", "--array", "8x8", "--out", "x"]
        )
        .status,
        2,
        "invalid manifest"
    );
}

#[test]
fn simulate_reports_logits_and_zero_skip_never_changes_them() {
    let dir = tiny_pipeline();
    let on = sacsim(
        dir.path(),
        &[
            "simulate",
            "model.sacp",
            "img.tensor",
            "--out",
            "report.json",
        ],
    );
    assert_eq!(on.status, 0, "{}", on.stderr);
    let on = json(&on);
    let off = json(&sacsim(
        dir.path(),
        &["simulate", "model.sacp", "img.tensor", "--no-zero-skip"],
    ));

    assert_eq!(
        on["logits"], off["logits"],
        "skipping zero data never changes results"
    );
    assert!(on["logits"]
        .as_array()
        .unwrap()
        .iter()
        .any(|v| v.as_i64().unwrap() != 0));
    assert_eq!(on["cycles"], off["cycles"]);
    assert_eq!(
        off["cell_cycles_active"], off["cell_cycles_total"],
        "with skipping off every cell-cycle counts as active"
    );
    assert!(
        on["cell_cycles_active"].as_u64().unwrap() < off["cell_cycles_active"].as_u64().unwrap()
    );

    // `--out` writes the same report that went to stdout.
    let file: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(file, on);

    // Both fidelity levels agree.
    let bit = json(&sacsim(
        dir.path(),
        &["simulate", "model.sacp", "img.tensor", "--fidelity", "bit"],
    ));
    let word = json(&sacsim(
        dir.path(),
        &["simulate", "model.sacp", "img.tensor", "--fidelity", "word"],
    ));
    assert_eq!(bit, word);
}

#[test]
fn compare_is_identical_until_a_cell_byte_is_corrupted() {
    let dir = tiny_pipeline();

    let clean = sacsim(
        dir.path(),
        &["compare", "model.json", "img.tensor", "--array", "8x8"],
    );
    assert_eq!(clean.status, 0, "{}", clean.stderr);
    let report = json(&clean);
    assert_eq!(report["identical"], true);
    assert_eq!(report["max_abs_diff"], 0);

    // Flip the sign bit of every non-zero cell in the fully connected layer's
    // payload: each stays a valid cell code, and any non-zero logit must
    // change sign.
    let stream = fs::read(dir.path().join("model.sacp")).unwrap();
    let mut program = Program::from_bytes(&stream).unwrap();
    let fc = program.layers.last_mut().unwrap();
    let mut flipped = 0;
    for instr in &mut fc.instructions {
        if let InstrKind::LoadWeights {
            tile_rows,
            tile_cols,
            payload,
        } = &mut instr.kind
        {
            for cell in &mut payload[8..8 + *tile_rows * *tile_cols] {
                if *cell != 0 {
                    *cell ^= 0x10;
                    flipped += 1;
                }
            }
        }
    }
    assert!(flipped > 0, "the generated fc layer has non-zero cells");
    fs::write(dir.path().join("corrupt.sacp"), program.to_bytes().unwrap()).unwrap();

    let bad = sacsim(
        dir.path(),
        &[
            "compare",
            "model.json",
            "img.tensor",
            "--stream",
            "corrupt.sacp",
        ],
    );
    assert_eq!(
        bad.status, 3,
        "mismatches use their own exit code: {}",
        bad.stderr
    );
    let report = json(&bad);
    assert_eq!(report["identical"], false);
    assert!(report["max_abs_diff"].as_u64().unwrap() > 0);
    let first = &report["first_mismatches"][0];
    assert!(
        first["class"].is_u64(),
        "mismatches name the class: {report}"
    );
    assert_ne!(first["simulated"], first["reference"]);
}

#[test]
fn gen_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let out = sacsim(
            dir.path(),
            &[
                "gen",
                "--seed",
                "11",
                "--preset",
                "random",
                "--out",
                "m.json",
                "--input-out",
                "i.tensor",
            ],
        );
        assert_eq!(out.status, 0, "{}", out.stderr);
    }
    for name in ["m.json", "i.tensor"] {
        assert_eq!(
            fs::read(a.path().join(name)).unwrap(),
            fs::read(b.path().join(name)).unwrap(),
            "{name} must be identical across runs"
        );
    }
}

#[test]
fn batch_mode_writes_one_report_per_image() {
    let dir = tiny_pipeline();
    let batch = dir.path().join("batch");
    fs::create_dir(&batch).unwrap();
    for seed in ["21", "22"] {
        let out = sacsim(
            dir.path(),
            &[
                "gen",
                "--seed",
                seed,
                "--preset",
                "tiny",
                "--out",
                "ignored.json",
                "--input-out",
                &format!("batch/s{seed}.tensor"),
                "--zero-fraction",
                "0.3",
            ],
        );
        assert_eq!(out.status, 0, "{}", out.stderr);
    }
    fs::write(batch.join("notes.txt"), "not a tensor").unwrap();

    let out = sacsim(
        dir.path(),
        &[
            "simulate",
            "model.sacp",
            "--batch",
            "batch",
            "--out",
            "reports",
        ],
    );
    assert_eq!(out.status, 0, "{}", out.stderr);
    let summary = json(&out);
    assert_eq!(summary["processed"], 2, "only .tensor files are simulated");

    for seed in ["21", "22"] {
        let report: Value = serde_json::from_str(
            &fs::read_to_string(dir.path().join(format!("reports/s{seed}.report.json"))).unwrap(),
        )
        .unwrap();
        assert!(report["argmax"].is_u64());
        assert!(report["cycles"].as_u64().unwrap() > 0);
    }
}
