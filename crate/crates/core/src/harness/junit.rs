//! JUnit XML rendering of a [`TestReport`]: one `<testcase>` per sample.
//!
//! FAIL becomes `<failure>`. INCONCLUSIVE becomes `<failure type="INCONCLUSIVE">`
//! when inconclusive verdicts break the build, `<skipped>` otherwise. No
//! timing attributes are written, so identical reports render identically.

use std::io;

use quick_xml::events::{BytesDecl, BytesText, Event};
use quick_xml::Writer;

use crate::harness::scoring::{Status, Verdict};
use crate::harness::suite::TestReport;

pub const SUITE_NAME: &str = "gradgate.heatmap-overlap";

fn details(v: &Verdict) -> String {
    let mut lines = vec![format!("true_label={}", v.true_label)];
    if let Some(p) = &v.predicted_label {
        lines.push(format!("predicted_label={p}"));
    }
    if let Some(c) = v.confidence {
        lines.push(format!("confidence={c:.6}"));
    }
    if let Some(o) = v.overlap_score {
        lines.push(format!("overlap_score={o:.6}"));
    }
    if let Some(path) = &v.overlay {
        lines.push(format!("overlay={path}"));
    }
    lines.join("\n")
}

fn write_case<W: io::Write>(
    w: &mut Writer<W>,
    v: &Verdict,
    inconclusive_fails: bool,
) -> io::Result<()> {
    let classname = format!("gradgate.{}", v.true_label.replace(' ', "_"));
    w.create_element("testcase")
        .with_attribute(("name", v.sample_id.as_str()))
        .with_attribute(("classname", classname.as_str()))
        .write_inner_content(|w| {
            let message = v.reasons.join("; ");
            match (v.status, inconclusive_fails) {
                (Status::Pass, _) => {}
                (Status::Fail, _) => {
                    w.create_element("failure")
                        .with_attribute(("message", message.as_str()))
                        .with_attribute(("type", "FAIL"))
                        .write_text_content(BytesText::new(&message))?;
                }
                (Status::Inconclusive, true) => {
                    w.create_element("failure")
                        .with_attribute(("message", message.as_str()))
                        .with_attribute(("type", "INCONCLUSIVE"))
                        .write_text_content(BytesText::new(&message))?;
                }
                (Status::Inconclusive, false) => {
                    w.create_element("skipped")
                        .with_attribute(("message", message.as_str()))
                        .write_empty()?;
                }
            }
            w.create_element("system-out")
                .write_text_content(BytesText::new(&details(v)))?;
            Ok(())
        })?;
    Ok(())
}

fn write_report<W: io::Write>(
    w: &mut Writer<W>,
    report: &TestReport,
    inconclusive_fails: bool,
) -> io::Result<()> {
    let s = &report.summary;
    let (failures, skipped) = if inconclusive_fails {
        (s.failed + s.inconclusive, 0)
    } else {
        (s.failed, s.inconclusive)
    };
    let tests = s.total.to_string();
    let failures = failures.to_string();
    let skipped = skipped.to_string();
    let counts = [
        ("tests", tests.as_str()),
        ("failures", failures.as_str()),
        ("errors", "0"),
        ("skipped", skipped.as_str()),
    ];

    w.write_event(Event::Decl(BytesDecl::new("1.0", Some("UTF-8"), None)))?;
    w.create_element("testsuites")
        .with_attribute(("name", "gradgate"))
        .with_attributes(counts)
        .write_inner_content(|w| {
            w.create_element("testsuite")
                .with_attribute(("name", SUITE_NAME))
                .with_attributes(counts)
                .write_inner_content(|w| {
                    let accuracy = format!("{:.6}", s.accuracy);
                    let props = [
                        ("model_hash", report.suite.model_hash.as_str()),
                        ("dataset_hash", report.suite.dataset_hash.as_str()),
                        ("accuracy", accuracy.as_str()),
                    ];
                    w.create_element("properties").write_inner_content(|w| {
                        for (name, value) in props {
                            w.create_element("property")
                                .with_attribute(("name", name))
                                .with_attribute(("value", value))
                                .write_empty()?;
                        }
                        Ok(())
                    })?;
                    for v in &report.verdicts {
                        write_case(w, v, inconclusive_fails)?;
                    }
                    Ok(())
                })?;
            Ok(())
        })?;
    Ok(())
}

pub fn render(report: &TestReport, inconclusive_fails: bool) -> String {
    let mut writer = Writer::new_with_indent(Vec::new(), b' ', 2);
    write_report(&mut writer, report, inconclusive_fails).expect("writing to a Vec cannot fail");
    let mut xml = String::from_utf8(writer.into_inner()).expect("quick-xml writes UTF-8");
    xml.push('\n');
    xml
}
