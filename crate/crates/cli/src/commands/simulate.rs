use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::Result;
use calibfuse_core::calibration::io::write_samples;
use calibfuse_core::evaluation::ground_truth_in_ego;
use calibfuse_core::exchange::{write_records, DetectionRecord};
use calibfuse_core::simulation::{generate, make_calibration_splits};
use clap::Args;
use serde::Serialize;

use super::ScenarioArgs;
use crate::manifest::RunManifest;

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Serialize)]
struct Split {
    frames: usize,
    streams: &'static str,
    files: Vec<String>,
}

#[derive(Serialize)]
struct Splits {
    seed: u64,
    ego: String,
    evaluation: Split,
    calibration: Split,
    calibration_samples: BTreeMap<String, usize>,
}

pub fn run(args: &SimulateArgs) -> Result<()> {
    let mut m = RunManifest::new("simulate");
    let scenario = args.scenario.resolve(&mut m)?;
    let frames = m.time("generate", || generate(&scenario))?;
    let samples = m.time("calibration split", || make_calibration_splits(&scenario))?;

    let out = &args.out;
    m.write(&out.join("scenario.toml"), scenario.to_toml().as_bytes())?;

    let ego_pose = scenario.ego_pose();
    let gt: Vec<DetectionRecord> = frames
        .iter()
        .map(|f| DetectionRecord::ground_truth(f.frame, &ego_pose, &ground_truth_in_ego(f, &ego_pose)))
        .collect();
    let mut eval_files = vec!["eval/ground_truth.jsonl".to_owned()];
    let mut buf = Vec::new();
    write_records(&mut buf, &gt)?;
    m.write(&out.join(&eval_files[0]), &buf)?;

    for agent in &scenario.agents {
        let records: Vec<DetectionRecord> = frames
            .iter()
            .map(|f| DetectionRecord::from_agent(f.frame, &f.agent(&agent.id).expect("agent present").detections))
            .collect();
        let rel = format!("eval/detections/{}.jsonl", agent.id);
        let mut buf = Vec::new();
        write_records(&mut buf, &records)?;
        m.write(&out.join(&rel), &buf)?;
        eval_files.push(rel);
    }

    let mut cal_files = Vec::new();
    for (id, s) in &samples {
        let rel = format!("calibration/{id}.csv");
        let mut buf = Vec::new();
        write_samples(&mut buf, s)?;
        m.write(&out.join(&rel), &buf)?;
        cal_files.push(rel);
    }

    let splits = Splits {
        seed: scenario.seed,
        ego: scenario.ego.to_string(),
        evaluation: Split {
            frames: scenario.frames,
            streams: "scene/agent",
            files: eval_files,
        },
        calibration: Split {
            frames: scenario.calibration_frames,
            streams: "calibration-scene/calibration-agent",
            files: cal_files,
        },
        calibration_samples: samples.iter().map(|(k, v)| (k.to_string(), v.len())).collect(),
    };
    m.write(&out.join("splits.toml"), toml::to_string(&splits).expect("splits serialize").as_bytes())?;
    m.save(&out.join("manifest.json"))?;

    println!(
        "simulated {} evaluation and {} calibration frames for {} agents into {}",
        scenario.frames,
        scenario.calibration_frames,
        scenario.agents.len(),
        out.display()
    );
    Ok(())
}
