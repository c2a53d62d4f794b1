use hetsched::bounds::{bound_violations, compute_bounds, Mode};
use hetsched::model::validate_task_system;
use hetsched::oracle::{big_lag, busy_intervals, lag_profile, verify_trace, JobSetD};
use hetsched::simulator::{simulate, ArrivalSource, Policy};
use hetsched::{rat, Platform, Rational, SporadicTask, TaskSystem};
use proptest::prelude::*;

fn system() -> impl Strategy<Value = (TaskSystem, Platform)> {
    let platform = prop::sample::select(vec![
        vec![("1", 2), ("2", 2)],
        vec![("1", 1), ("5/2", 2)],
        vec![("1", 3)],
        vec![("1", 1), ("3/2", 1), ("3", 1)],
    ])
    .prop_map(|c| {
        let pairs: Vec<(Rational, usize)> = c.into_iter().map(|(s, n)| (rat(s), n)).collect();
        Platform::from_pairs(&pairs).unwrap()
    });
    let tasks = prop::collection::vec((1i64..=6, 1i64..=16), 2..=7);
    (platform, tasks).prop_filter_map("rejected system", |(platform, raw)| {
        let tasks: Vec<SporadicTask> = raw
            .iter()
            .enumerate()
            .map(|(i, &(p, u))| {
                let p = Rational::from(p);
                SporadicTask::new(i as u32 + 1, &p * Rational::new(u as i128, 8), p).unwrap()
            })
            .collect();
        let ts = TaskSystem::new(tasks).unwrap();
        validate_task_system(&ts, &platform).accepted.then_some((ts, platform))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn gedf_h_traces_satisfy_lag_properties_and_bound((ts, platform) in system(), sporadic in any::<bool>(), seed in any::<u64>()) {
        let arrivals = if sporadic {
            ArrivalSource::SporadicRandom { max_extra: rat("1"), seed }
        } else {
            ArrivalSource::Periodic
        };
        let h = ts.max_period().unwrap() * Rational::from(10);
        let trace = simulate(&ts, &platform, &arrivals, Policy::GedfHPreemptive, &h).unwrap();
        let report = verify_trace(&trace, 12);
        prop_assert!(report.passed(), "{:?}", report);
        let bounds = compute_bounds(&ts, &platform, Mode::Preemptive).unwrap();
        prop_assert!(bound_violations(&trace, &bounds).is_empty());
    }

    #[test]
    fn lag_profile_agrees_with_pointwise_lag((ts, platform) in system(), pick in any::<prop::sample::Index>()) {
        let h = ts.max_period().unwrap() * Rational::from(4);
        let trace = simulate(&ts, &platform, &ArrivalSource::Periodic, Policy::GedfHPreemptive, &h).unwrap();
        let candidates: Vec<_> = trace.jobs.iter().filter(|r| r.deadline <= h).collect();
        prop_assume!(!candidates.is_empty());
        let d = JobSetD::from_pivot(&trace, pick.get(&candidates).job).unwrap();
        for p in lag_profile(&trace, &d) {
            prop_assert_eq!(&p.lag, &big_lag(&trace, &d, &p.time));
        }
        // LAG never exceeds its value at the start of the current busy stretch
        for (a, b) in busy_intervals(&trace, &d) {
            prop_assert!(big_lag(&trace, &d, &b) <= big_lag(&trace, &d, &a));
        }
    }

    #[test]
    fn nonpreemptive_traces_respect_their_bound((ts, platform) in system()) {
        let h = ts.max_period().unwrap() * Rational::from(10);
        let trace = simulate(&ts, &platform, &ArrivalSource::Periodic, Policy::GedfHNonpreemptive, &h).unwrap();
        let bounds = compute_bounds(&ts, &platform, Mode::Nonpreemptive).unwrap();
        prop_assert!(bound_violations(&trace, &bounds).is_empty());
    }
}
