use std::path::Path;

use cotreward::curation::mock::{MockScript, SampleScript, ScriptedClient};
use cotreward::curation::{
    rejects_path, run_curation, CurationConfig, CurationError, RawSample, ReferenceRecord,
    RejectedSample, RunOptions,
};
use cotreward::LanguageCode;

fn samples(n: usize) -> Vec<RawSample> {
    (0..n)
        .map(|i| RawSample {
            id: format!("id{i:03}"),
            image_ref: format!("img/{i}.jpg"),
            question: format!("question {i}"),
            answer: format!("answer {i}"),
            language_label: LanguageCode::ALL[i % LanguageCode::ALL.len()],
        })
        .collect()
}

fn write_input(path: &Path, samples: &[RawSample]) {
    let text: String = samples
        .iter()
        .map(|s| serde_json::to_string(s).unwrap() + "\n")
        .collect();
    std::fs::write(path, text).unwrap();
}

fn ids<T>(path: &Path, id: impl Fn(&T) -> String) -> Vec<String>
where
    T: serde::de::DeserializeOwned,
{
    std::fs::read_to_string(path)
        .unwrap_or_default()
        .lines()
        .map(|l| id(&serde_json::from_str(l).unwrap()))
        .collect()
}

fn script() -> MockScript {
    let mut script = MockScript::default();
    script.samples.insert(
        "id002".into(),
        SampleScript {
            scores: [(1, vec![0.1, 0.9])].into(),
            corrections: [(
                1,
                vec!["<segments>\n[1,1,9,9] fixed\n[2,2,8,8] second\n</segments>".into()],
            )]
            .into(),
            ..Default::default()
        },
    );
    script.samples.insert(
        "id005".into(),
        SampleScript {
            transport_failure: true,
            ..Default::default()
        },
    );
    script.samples.insert(
        "id007".into(),
        SampleScript {
            scores: [(4, vec![0.0])].into(),
            ..Default::default()
        },
    );
    script
}

fn config(concurrency: usize) -> CurationConfig {
    CurationConfig {
        concurrency,
        ..CurationConfig::default()
    }
}

#[test]
fn output_is_in_input_order_and_independent_of_concurrency() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.jsonl");
    write_input(&input, &samples(30));
    let mut outputs = Vec::new();
    for concurrency in [1, 3, 8] {
        let output = dir.path().join(format!("out{concurrency}.jsonl"));
        let client = ScriptedClient::new(script());
        let stats = run_curation(
            &input,
            &output,
            &config(concurrency),
            client.clients(),
            RunOptions::default(),
        )
        .unwrap();
        assert_eq!((stats.accepted, stats.rejected), (28, 2));
        assert_eq!(stats.rejected_by_reason.get("transport"), Some(&1));
        assert_eq!(stats.rejected_by_reason.get("step_rejected"), Some(&1));
        assert_eq!(stats.cycle_histogram.get(&1), Some(&1));
        outputs.push(std::fs::read(&output).unwrap());
    }
    assert!(outputs.windows(2).all(|w| w[0] == w[1]));

    let output = dir.path().join("out1.jsonl");
    let accepted = ids::<ReferenceRecord>(&output, |r| r.sample.id.clone());
    let mut sorted = accepted.clone();
    sorted.sort();
    assert_eq!(accepted, sorted);

    let records: Vec<ReferenceRecord> = std::fs::read_to_string(&output)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let fixed = records.iter().find(|r| r.id() == "id002").unwrap();
    assert_eq!(fixed.reference_counts.text_segments, 2);
    assert_eq!(fixed.trace.replay()[0], fixed.cot.steps[0].content);
    assert_ne!(fixed.trace.initial_steps[0], fixed.cot.steps[0].content);
}

#[test]
fn refuses_to_overwrite_without_resume() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.jsonl");
    let output = dir.path().join("out.jsonl");
    write_input(&input, &samples(2));
    std::fs::write(&output, "{}\n").unwrap();
    let client = ScriptedClient::new(MockScript::default());
    let err = run_curation(
        &input,
        &output,
        &config(2),
        client.clients(),
        RunOptions::default(),
    )
    .unwrap_err();
    assert!(matches!(err, CurationError::OutputExists(_)));
    assert!(client.calls().is_empty());
}

#[test]
fn resume_retries_transport_rejects_only() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.jsonl");
    let output = dir.path().join("out.jsonl");
    write_input(&input, &samples(10));
    let first = ScriptedClient::new(script());
    run_curation(
        &input,
        &output,
        &config(4),
        first.clients(),
        RunOptions::default(),
    )
    .unwrap();

    // The endpoint for id005 comes back.
    let second = ScriptedClient::new(MockScript::default());
    let resume = RunOptions {
        resume: true,
        limit: None,
    };
    let stats = run_curation(&input, &output, &config(4), second.clients(), resume).unwrap();
    assert_eq!(second.generated_ids(), vec!["id005".to_string()]);
    assert_eq!((stats.skipped, stats.accepted), (9, 1));

    let third = ScriptedClient::new(MockScript::default());
    run_curation(&input, &output, &config(4), third.clients(), resume).unwrap();
    assert!(third.calls().is_empty());

    let rejects = ids::<RejectedSample>(&rejects_path(&output), |r| r.id.clone());
    assert_eq!(rejects, vec!["id005".to_string(), "id007".to_string()]);
}

#[test]
fn torn_trailing_line_is_dropped_and_redone() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.jsonl");
    let output = dir.path().join("out.jsonl");
    write_input(&input, &samples(6));
    let first = ScriptedClient::new(MockScript::default());
    let limited = RunOptions {
        resume: false,
        limit: Some(3),
    };
    run_curation(&input, &output, &config(2), first.clients(), limited).unwrap();
    let mut bytes = std::fs::read(&output).unwrap();
    let last_start = bytes[..bytes.len() - 1]
        .iter()
        .rposition(|&b| b == b'\n')
        .unwrap()
        + 1;
    bytes.truncate(last_start + 20);
    std::fs::write(&output, &bytes).unwrap();

    let second = ScriptedClient::new(MockScript::default());
    let resume = RunOptions {
        resume: true,
        limit: None,
    };
    run_curation(&input, &output, &config(2), second.clients(), resume).unwrap();
    assert_eq!(
        second.generated_ids(),
        vec!["id002", "id003", "id004", "id005"]
    );
    let done = ids::<ReferenceRecord>(&output, |r| r.sample.id.clone());
    assert_eq!(
        done,
        vec!["id000", "id001", "id002", "id003", "id004", "id005"]
    );
}

#[test]
fn bad_input_lines_name_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.jsonl");
    let mut text: String = samples(2)
        .iter()
        .map(|s| serde_json::to_string(s).unwrap() + "\n")
        .collect();
    text.push_str("{\"id\": \"x\"}\n");
    std::fs::write(&input, text).unwrap();
    let client = ScriptedClient::new(MockScript::default());
    let err = run_curation(
        &input,
        &dir.path().join("o.jsonl"),
        &config(1),
        client.clients(),
        RunOptions::default(),
    )
    .unwrap_err();
    match err {
        CurationError::InvalidInput { line, .. } => assert_eq!(line, 3),
        other => panic!("{other:?}"),
    }

    let dup: String = samples(2)
        .iter()
        .chain(samples(1).iter())
        .map(|s| serde_json::to_string(s).unwrap() + "\n")
        .collect();
    std::fs::write(&input, dup).unwrap();
    let err = run_curation(
        &input,
        &dir.path().join("o2.jsonl"),
        &config(1),
        client.clients(),
        RunOptions::default(),
    )
    .unwrap_err();
    assert!(err.to_string().contains("duplicate"), "{err}");
}

#[test]
fn invalid_config_is_rejected_before_any_call() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.jsonl");
    write_input(&input, &samples(1));
    let client = ScriptedClient::new(MockScript::default());
    let bad = CurationConfig {
        concurrency: 0,
        ..CurationConfig::default()
    };
    let err = run_curation(
        &input,
        &dir.path().join("o.jsonl"),
        &bad,
        client.clients(),
        RunOptions::default(),
    )
    .unwrap_err();
    assert!(err.to_string().contains("concurrency"), "{err}");
    assert!(client.calls().is_empty());
}
