use ankle_core::signal::{butterworth_lowpass, finite_difference, resample_linear, time_normalize, AxisTag, TimeSeries};
use ankle_core::stability::{
    ami_delay, detect_foot_strikes, estimate_com, fnn_dimension, mos_ap, mos_ml, windowed_lyapunov, EventConfig,
    FnnConfig, LyapunovConfig,
};
use ankle_core::stiffness::{average_cycle, quasi_stiffness, segment_cycles, GaitPhaseConfig};
use ankle_core::trial::{
    generate_trial, generate_trial_with_truth, inject_perturbation, ControllerSettings, Marker, PerturbationKind,
    TrialRecording, TrialSpec, Variability,
};

fn heel_strikes(rec: &TrialRecording) -> Vec<usize> {
    let ch = |axis| TimeSeries::new(rec.marker_axis(Marker::Lheel, axis), rec.rate, 0.0, axis).unwrap();
    detect_foot_strikes(&ch(AxisTag::Vt), &ch(AxisTag::Ap), &EventConfig::default()).unwrap()
}

/// CoM velocity per axis after the 2nd-order 10 Hz low-pass.
fn com_velocities(rec: &TrialRecording) -> Vec<TimeSeries> {
    estimate_com(&rec.markers, rec.rate)
        .unwrap()
        .iter()
        .map(|c| {
            let f = butterworth_lowpass(c, 2, 10.0, true).unwrap();
            finite_difference(&f, f.dt()).unwrap()
        })
        .collect()
}

#[test]
fn detected_stride_count_equals_generated() {
    let spec = TrialSpec { seed: 11, ..Default::default() };
    let (rec, truth) = generate_trial_with_truth(&spec).unwrap();
    let ev = heel_strikes(&rec);
    assert_eq!(ev.len() - 1, spec.n_strides);
    for (e, t) in ev.iter().zip(&truth.strike_times) {
        assert!((*e as f64 / rec.rate - t).abs() <= 0.02 + 1e-9, "{e} vs {t}");
    }
}

#[test]
fn load_impulse_recovers_within_five_strides() {
    let base = TrialSpec {
        controller: ControllerSettings::ac(20.0),
        n_strides: 30,
        variability: Variability::none(),
        ..Default::default()
    };
    let hit = 12;
    let pert = inject_perturbation(&base, PerturbationKind::LoadImpulse, hit, 50.0);
    let (a, b) = (generate_trial(&base).unwrap(), generate_trial(&pert).unwrap());
    let q = |r: &TrialRecording| r.prosthesis.iter().map(|p| p.state.q).collect::<Vec<f64>>();
    let ev = &a.events_left;
    let cycles_a = segment_cycles(&q(&a), ev, 200).unwrap();
    let cycles_b = segment_cycles(&q(&b), ev, 200).unwrap();
    let template = average_cycle(&cycles_a[5..25], &cycles_a[5..25]).unwrap().mean_angle;

    let rms = |c: &[f64]| (c.iter().zip(&template).map(|(x, t)| (x - t).powi(2)).sum::<f64>() / c.len() as f64).sqrt();
    let range = |c: &[f64]| c.iter().cloned().fold(f64::MIN, f64::max) - c.iter().cloned().fold(f64::MAX, f64::min);

    let hit_dev = rms(&cycles_b[hit]);
    assert!(range(&cycles_b[hit]) > range(&cycles_a[hit]) + 1.0);
    assert!(hit_dev > 1.0, "{hit_dev}");
    let settled = rms(&cycles_b[hit + 5]);
    let baseline = rms(&cycles_a[hit + 5]);
    assert!(settled < baseline + 0.05 * hit_dev, "settled {settled} baseline {baseline} hit {hit_dev}");
}

#[test]
fn admittance_k15_reaches_target_by_sixty_percent_stance() {
    let spec = TrialSpec {
        controller: ControllerSettings::ac(15.0),
        n_strides: 60,
        seed: 1,
        ..Default::default()
    };
    let rec = generate_trial(&spec).unwrap();
    let q: Vec<f64> = rec.prosthesis.iter().map(|p| p.state.q).collect();
    let m: Vec<f64> = rec.prosthesis.iter().map(|p| p.state.moment).collect();
    let ev = &rec.events_left[10..];
    let avg = average_cycle(&segment_cycles(&m, ev, 1000).unwrap(), &segment_cycles(&q, ev, 1000).unwrap()).unwrap();
    let profile = quasi_stiffness(&avg, &GaitPhaseConfig::default()).unwrap();
    let k60 = profile.at(60.0).unwrap();
    assert!((k60 - 15.0).abs() <= 1.5, "{k60}");
}

/// One cycle shaped like the illustrative figure: the CoP sits on one side
/// of the XcoM during stance with a single closest (ML) or farthest (AP)
/// approach, then the foot swings and its CoP must be ignored.
#[test]
fn figure_shaped_cycle_reproduces_illustrative_margins() {
    let n = 147;
    let stance_end = 88;
    let stance: Vec<bool> = (0..n).map(|i| i < stance_end).collect();
    let phase = |i: usize| i as f64 / n as f64;

    let xcom_ml: Vec<f64> = (0..n).map(|i| 30.0 * (std::f64::consts::TAU * phase(i)).sin()).collect();
    let cop_ml: Vec<f64> = (0..n)
        .map(|i| {
            if stance[i] {
                xcom_ml[i] + 39.21 + 0.02 * (i as f64 - 41.0).powi(2)
            } else {
                xcom_ml[i] + 1.0
            }
        })
        .collect();
    let xcom_ap: Vec<f64> = (0..n).map(|i| 80.0 * (std::f64::consts::TAU * phase(i)).cos()).collect();
    let cop_ap: Vec<f64> = (0..n)
        .map(|i| {
            if stance[i] {
                xcom_ap[i] - 212.06 + 0.05 * (i as f64 - 70.0).powi(2)
            } else {
                xcom_ap[i] - 400.0
            }
        })
        .collect();

    let cycles = [(0, n)];
    let ml = mos_ml(&xcom_ml, &cop_ml, &cycles, &stance).unwrap().values[0];
    let ap = mos_ap(&xcom_ap, &cop_ap, &cycles, &stance).unwrap().values[0];

    let scan = |x: &[f64], c: &[f64]| -> Vec<f64> { (0..stance_end).map(|i| (c[i] - x[i]).abs()).collect() };
    let ml_scan = scan(&xcom_ml, &cop_ml).into_iter().fold(f64::INFINITY, f64::min);
    let ap_scan = scan(&xcom_ap, &cop_ap).into_iter().fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(ml, ml_scan);
    assert_eq!(ap, ap_scan);
    assert!((ml - 39.21).abs() < 1.0, "{ml}");
    assert!((ap - 212.06).abs() < 1.0, "{ap}");
}

#[test]
fn gait_like_embedding_parameters() {
    let rec = generate_trial(&TrialSpec { seed: 7, ..Default::default() }).unwrap();
    let ev = &heel_strikes(&rec)[25..];
    let v = com_velocities(&rec);
    let norm = |s: &TimeSeries| time_normalize(s, ev, 150, 15000).unwrap().0.into_samples();

    let vt = norm(&v[2]);
    let tau_vt = ami_delay(&vt, 30).unwrap();
    assert!((5..=11).contains(&tau_vt), "VT tau {tau_vt}");

    let ap = norm(&v[1]);
    let tau_ap = ami_delay(&ap, 30).unwrap();
    let d_ap = fnn_dimension(&ap, tau_ap, &FnnConfig::default()).unwrap();
    assert!((3..=5).contains(&d_ap.dim), "AP d {}", d_ap.dim);
}

#[test]
fn exponents_invariant_to_uniform_time_rescaling() {
    let spec = TrialSpec { n_strides: 180, seed: 9, ..Default::default() };
    let rec = generate_trial(&spec).unwrap();
    let ev: Vec<usize> = heel_strikes(&rec)[25..].to_vec();
    let vt = com_velocities(&rec).remove(2);
    let cfg = LyapunovConfig { n_windows: 1, ..Default::default() };
    let original = windowed_lyapunov(&vt, &ev, &cfg).unwrap();

    // The same motion recorded twice as densely: every stride spans twice
    // as many samples.
    let slow = resample_linear(&vt, 2.0 * vt.sample_rate()).unwrap();
    let ev2: Vec<usize> = ev.iter().map(|e| 2 * e).collect();
    let rescaled = windowed_lyapunov(&slow, &ev2, &cfg).unwrap();

    assert_eq!(original.params, rescaled.params);
    let (a, b) = (original.lambda_s.mean, rescaled.lambda_s.mean);
    assert!((a - b).abs() < 0.02 * a.abs(), "{a} vs {b}");
    assert!((original.lambda_l.mean - rescaled.lambda_l.mean).abs() < 0.01);
}

#[test]
fn stationary_trial_windows_agree() {
    let rec = generate_trial(&TrialSpec { seed: 5, ..Default::default() }).unwrap();
    let ev = &heel_strikes(&rec)[25..];
    let vt = com_velocities(&rec).remove(2);
    let r = windowed_lyapunov(&vt, ev, &LyapunovConfig::default()).unwrap();
    assert_eq!(r.lambda_s_windows.len(), 25);
    assert!(r.lambda_s.sd < 0.1 * r.lambda_s.mean, "{:?}", r.lambda_s);
}

/// The synthetic generator's stride-to-stride variability has only a few
/// degrees of freedom, so nearest neighbours start close to the
/// inter-stride spread and the short-term curve rises by about two
/// log-units per stride rather than the 3–10 seen in walking data.
#[test]
#[ignore = "synthetic gait yields short-term exponents near 2 per stride"]
fn jittered_gait_short_term_exponent_in_walking_range() {
    let rec = generate_trial(&TrialSpec { seed: 3, ..Default::default() }).unwrap();
    let ev = &heel_strikes(&rec)[25..];
    for v in com_velocities(&rec) {
        let r = windowed_lyapunov(&v, ev, &LyapunovConfig { n_windows: 3, ..Default::default() }).unwrap();
        assert!((3.0..=10.0).contains(&r.lambda_s.mean), "{:?}: {}", v.label(), r.lambda_s.mean);
    }
}
