//! Independent oracles shared by the integration tests and the acceptance
//! target. Nothing here calls the code paths it is used to check.

#![allow(dead_code)]

use gradgate::model::{InferenceRecord, Model};
use gradgate::numerics::{forward_logits, forward_trace, Layer, Tensor};

pub const FD_EPSILON: f64 = 1e-5;
/// Pre-activations or max-pool margins closer than this to a kink make a
/// finite-difference comparison meaningless; such draws are resampled.
pub const KINK_MARGIN: f64 = 1e-3;

/// `|a - n| / max(|a|, |n|, 1e-12)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-12)
}

/// True when any ReLU input or max-pool window after the Grad-CAM activation
/// lies within [`KINK_MARGIN`] of a non-differentiable point.
pub fn near_kink(model: &Model, record: &InferenceRecord) -> bool {
    let start = record.activation_layer + 1;
    for (layer, cache) in model.layers()[start..].iter().zip(&record.caches[start..]) {
        match layer {
            Layer::Relu => {
                if cache.input.data().iter().any(|z| z.abs() < KINK_MARGIN) {
                    return true;
                }
            }
            Layer::MaxPool { kernel, stride } => {
                let [c, h, w] = <[usize; 3]>::try_from(cache.input.shape()).unwrap();
                let (oh, ow) = ((h - kernel) / stride + 1, (w - kernel) / stride + 1);
                let d = cache.input.data();
                for ch in 0..c {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let mut window: Vec<f64> = (0..*kernel)
                                .flat_map(|ky| (0..*kernel).map(move |kx| (ky, kx)))
                                .map(|(ky, kx)| {
                                    d[ch * h * w + (oy * stride + ky) * w + ox * stride + kx]
                                })
                                .collect();
                            window.sort_by(|a, b| b.total_cmp(a));
                            if window.len() > 1 && window[0] - window[1] < KINK_MARGIN {
                                return true;
                            }
                        }
                    }
                }
            }
            _ => {}
        }
    }
    false
}

/// Central-difference gradient of logit `class` with respect to the
/// Grad-CAM activation, evaluated by re-running the network tail.
pub fn numeric_gradient(model: &Model, record: &InferenceRecord, class: usize) -> Vec<f64> {
    let tail = &model.layers()[record.activation_layer + 1..];
    let base = &record.target_activation;
    (0..base.len())
        .map(|i| {
            let shifted = |delta: f64| {
                let mut t = base.clone();
                t.data_mut()[i] += delta;
                forward_logits(tail, t).unwrap().data()[class]
            };
            (shifted(FD_EPSILON) - shifted(-FD_EPSILON)) / (2.0 * FD_EPSILON)
        })
        .collect()
}

/// ReLU on/off states and max-pool winners of the tail evaluated at `input`.
fn linear_piece(tail: &[Layer], input: Tensor) -> (Vec<bool>, Vec<usize>) {
    let (_, caches) = forward_trace(tail, input).unwrap();
    let mut on = Vec::new();
    let mut winners = Vec::new();
    for (layer, cache) in tail.iter().zip(&caches) {
        match layer {
            Layer::Relu => on.extend(cache.input.data().iter().map(|&z| z > 0.0)),
            Layer::MaxPool { .. } => winners.extend(cache.argmax.as_deref().unwrap_or(&[])),
            _ => {}
        }
    }
    (on, winners)
}

/// Central difference for one activation entry, or `None` when `A ± ε`
/// falls on a different linear piece of the tail than `A` itself.
pub fn numeric_gradient_entry(
    model: &Model,
    record: &InferenceRecord,
    class: usize,
    index: usize,
) -> Option<f64> {
    let tail = &model.layers()[record.activation_layer + 1..];
    let base = &record.target_activation;
    let piece = |delta: f64| {
        let mut t = base.clone();
        t.data_mut()[index] += delta;
        let (on, winners) = linear_piece(tail, t.clone());
        (on, winners, forward_logits(tail, t).unwrap().data()[class])
    };
    let (on0, win0) = linear_piece(tail, base.clone());
    let (on_p, win_p, up) = piece(FD_EPSILON);
    let (on_m, win_m, down) = piece(-FD_EPSILON);
    (on_p == on0 && on_m == on0 && win_p == win0 && win_m == win0)
        .then(|| (up - down) / (2.0 * FD_EPSILON))
}

/// Scalar Grad-CAM: `ReLU(sum_k mean(G^k) * A^k)` with every sum written out.
pub fn brute_force_cam(activation: &Tensor, gradient: &Tensor) -> Vec<f64> {
    let (k, h, w) = (
        activation.shape()[0],
        activation.shape()[1],
        activation.shape()[2],
    );
    let a = activation.data();
    let g = gradient.data();
    let mut alpha = vec![0.0; k];
    for c in 0..k {
        let mut s = 0.0;
        for y in 0..h {
            for x in 0..w {
                s += g[c * h * w + y * w + x];
            }
        }
        alpha[c] = s / (h * w) as f64;
    }
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut s = 0.0;
            for c in 0..k {
                s += alpha[c] * a[c * h * w + y * w + x];
            }
            out[y * w + x] = if s > 0.0 { s } else { 0.0 };
        }
    }
    out
}

/// Per-pixel overlap: visits every pixel, tests membership in each dilated
/// box, and sums mass inside versus total. Boxes are `[x0, y0, x1, y1]` with
/// exclusive upper bounds.
pub fn brute_force_overlap(
    values: &[f64],
    width: usize,
    height: usize,
    boxes: &[[u32; 4]],
    dilation: f64,
) -> Option<f64> {
    let inside_any = |x: usize, y: usize| {
        boxes.iter().any(|b| {
            let grow = |lo: u32, hi: u32, limit: usize| {
                let span = f64::from(hi - lo) * dilation;
                let mid = (f64::from(lo) + f64::from(hi)) / 2.0;
                let a = (mid - span / 2.0).floor();
                let b = (mid + span / 2.0).ceil();
                (a.max(0.0), b.min(limit as f64))
            };
            let (x0, x1) = grow(b[0], b[2], width);
            let (y0, y1) = grow(b[1], b[3], height);
            (x as f64) >= x0 && (x as f64) < x1 && (y as f64) >= y0 && (y as f64) < y1
        })
    };
    let mut total = 0.0;
    let mut inside = 0.0;
    for y in 0..height {
        for x in 0..width {
            let v = values[y * width + x];
            total += v;
            if inside_any(x, y) {
                inside += v;
            }
        }
    }
    (total > 0.0).then(|| inside / total)
}

/// Structural check of a JUnit XML document against the schema most CI
/// systems accept (the Jenkins/Ant `junit-10` layout): element nesting,
/// required attributes, numeric counters, and counters that agree with the
/// test cases present.
pub fn validate_junit(xml: &str) -> Result<(), String> {
    let doc = roxmltree::Document::parse(xml).map_err(|e| format!("not well-formed: {e}"))?;
    let root = doc.root_element();
    let suites: Vec<roxmltree::Node> = match root.tag_name().name() {
        "testsuites" => {
            check_counters(root, &["tests", "failures", "errors", "skipped"], false)?;
            let mut v = Vec::new();
            for child in root.children().filter(|n| n.is_element()) {
                if child.tag_name().name() != "testsuite" {
                    return Err(format!(
                        "<testsuites> may not contain <{}>",
                        child.tag_name().name()
                    ));
                }
                v.push(child);
            }
            v
        }
        "testsuite" => vec![root],
        other => return Err(format!("unexpected root element <{other}>")),
    };
    let (mut all_tests, mut all_failures, mut all_skipped) = (0, 0, 0);
    for suite in suites {
        if suite.attribute("name").is_none() {
            return Err("<testsuite> without name".into());
        }
        check_counters(suite, &["tests", "failures", "errors", "skipped"], true)?;
        let (mut tests, mut failures, mut errors, mut skipped) = (0, 0, 0, 0);
        for child in suite.children().filter(|n| n.is_element()) {
            match child.tag_name().name() {
                "properties" => {
                    for p in child.children().filter(|n| n.is_element()) {
                        if p.tag_name().name() != "property"
                            || p.attribute("name").is_none()
                            || p.attribute("value").is_none()
                        {
                            return Err("malformed <property>".into());
                        }
                    }
                }
                "testcase" => {
                    tests += 1;
                    if child.attribute("name").is_none() || child.attribute("classname").is_none() {
                        return Err("<testcase> needs name and classname".into());
                    }
                    for part in child.children().filter(|n| n.is_element()) {
                        match part.tag_name().name() {
                            "failure" => failures += 1,
                            "error" => errors += 1,
                            "skipped" => skipped += 1,
                            "system-out" | "system-err" => {}
                            other => return Err(format!("<testcase> may not contain <{other}>")),
                        }
                    }
                }
                "system-out" | "system-err" => {}
                other => return Err(format!("<testsuite> may not contain <{other}>")),
            }
        }
        let attr = |n: &str| {
            suite
                .attribute(n)
                .map_or(0, |v| v.parse::<usize>().unwrap())
        };
        if (
            attr("tests"),
            attr("failures"),
            attr("errors"),
            attr("skipped"),
        ) != (tests, failures, errors, skipped)
        {
            return Err(format!(
                "counters tests={} failures={} errors={} skipped={} disagree with content {tests}/{failures}/{errors}/{skipped}",
                attr("tests"),
                attr("failures"),
                attr("errors"),
                attr("skipped")
            ));
        }
        all_tests += tests;
        all_failures += failures;
        all_skipped += skipped;
    }
    if root.tag_name().name() == "testsuites" {
        let attr = |n: &str| root.attribute(n).map(|v| v.parse::<usize>().unwrap());
        for (name, want) in [
            ("tests", all_tests),
            ("failures", all_failures),
            ("skipped", all_skipped),
        ] {
            if let Some(got) = attr(name) {
                if got != want {
                    return Err(format!("<testsuites {name}={got}> but suites total {want}"));
                }
            }
        }
    }
    Ok(())
}

fn check_counters(
    node: roxmltree::Node,
    names: &[&str],
    tests_required: bool,
) -> Result<(), String> {
    for name in names {
        match node.attribute(*name) {
            Some(v) if v.parse::<usize>().is_err() => {
                return Err(format!(
                    "attribute {name}={v:?} is not a non-negative integer"
                ))
            }
            None if tests_required && *name == "tests" => {
                return Err("<testsuite> without tests".into())
            }
            _ => {}
        }
    }
    Ok(())
}
