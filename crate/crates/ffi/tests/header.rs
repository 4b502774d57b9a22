//! Checks the generated header against the exported symbols, and that a C
//! program compiles and links against the static library.

use std::path::{Path, PathBuf};
use std::process::Command;

const EXPORTS: &[&str] = &[
    "slipt_last_error",
    "slipt_version",
    "slipt_string_free",
    "slipt_scenario_from_str",
    "slipt_scenario_load",
    "slipt_scenario_free",
    "slipt_validate",
    "slipt_scenario_hash",
    "slipt_run",
    "slipt_run_free",
    "slipt_run_summary_json",
    "slipt_run_trace",
    "slipt_run_node_metrics",
    "slipt_attenuate",
    "slipt_geometric_capture",
    "slipt_command_encode",
    "slipt_command_decode",
];

fn header_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("include/slipt.h")
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(header_path()).unwrap();
    for name in EXPORTS {
        assert!(header.contains(&format!(" {name}(")) || header.contains(&format!("*{name}(")), "{name} missing");
    }
    let source = include_str!("../src/lib.rs");
    assert_eq!(source.matches("#[no_mangle]").count(), EXPORTS.len());
    assert!(header.contains("typedef struct SliptScenario SliptScenario;"));
    assert!(header.contains("typedef struct SliptRun SliptRun;"));
    assert!(header.contains("SLIPT_STATUS_OK = 0"));
    assert!(header.contains("SLIPT_STATUS_VALIDATION = 4"));
}

const PROGRAM: &str = r#"
#include <stdio.h>
#include <string.h>
#include "slipt.h"

int main(void) {
    const char *text =
        "{ duration: \"10min\", seed: 4,"
        "  transmitters: [{ id: \"tx\", position: [\"0m\",\"0m\",\"0m\"], power: \"1W\","
        "    wavelength: \"450nm\", water: \"clear_ocean\", beam_radius: \"1cm\" }],"
        "  nodes: [{ id: \"n\", position: [\"0m\",\"0m\",\"1m\"],"
        "    store: { kind: \"battery\", capacity: \"10J\" } }] }";
    SliptScenario *sc = NULL;
    if (slipt_scenario_from_str(text, &sc) != SLIPT_STATUS_OK) {
        fprintf(stderr, "load: %s\n", slipt_last_error());
        return 1;
    }
    SliptRun *run = NULL;
    uint64_t seed = 11;
    if (slipt_run(sc, &seed, &run) != SLIPT_STATUS_OK) {
        fprintf(stderr, "run: %s\n", slipt_last_error());
        return 1;
    }
    SliptNodeMetrics m;
    if (slipt_run_node_metrics(run, "n", &m) != SLIPT_STATUS_OK) return 1;
    printf("%.6f\n", m.harvested_j);

    uint8_t frame[4];
    char *back = NULL;
    if (slipt_command_encode("SensorOn(7)", frame) != SLIPT_STATUS_OK) return 1;
    if (slipt_command_decode(frame, 4, &back) != SLIPT_STATUS_OK) return 1;
    printf("%s\n", back);
    slipt_string_free(back);

    if (slipt_scenario_from_str("{}", &sc) != SLIPT_STATUS_VALIDATION) return 1;
    printf("%d\n", strstr(slipt_last_error(), "duration") != NULL);

    slipt_run_free(run);
    slipt_scenario_free(sc);
    return 0;
}
"#;

fn static_lib() -> PathBuf {
    // Integration test binaries live in <target>/<profile>/deps.
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().join("libslipt_ffi.a")
}

#[test]
fn c_program_links_and_runs() {
    let lib = static_lib();
    assert!(lib.exists(), "{} not built", lib.display());
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("c_program");
    std::fs::create_dir_all(&dir).unwrap();
    let src = dir.join("main.c");
    let exe = dir.join("main");
    std::fs::write(&src, PROGRAM).unwrap();

    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let status = Command::new(cc)
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(header_path().parent().unwrap())
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .expect("C compiler available");
    assert!(status.success());

    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = stdout.lines().collect();
    assert!(lines[0].parse::<f64>().unwrap() > 0.0);
    assert_eq!(lines[1], "SensorOn(7)");
    assert_eq!(lines[2], "1");
}
