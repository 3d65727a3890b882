//! Synthetic fault tables in the Telstra competition layout.
//!
//! Each id sits at a location whose latent risk drives its fault severity
//! (0 none, 1 few, 2 many). Faulty ids raise more alarm-type log features
//! with larger volumes, report fault-related event types more often and
//! carry more intense severity types. A share of routine log features and
//! events is common to every id regardless of label.

use std::collections::BTreeMap;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Beta, Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{FcpError, Result};
use crate::ingest::{
    LogFeatureRow, RawFaultTables, TokenRow, TrainRow, EVENT_FILE, LOG_FEATURE_FILE,
    RESOURCE_FILE, SEVERITY_TYPE_FILE, TRAIN_FILE,
};
use crate::persist::write_atomic;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_ids: usize,
    pub n_locations: usize,
    pub n_log_features: usize,
    pub n_event_types: usize,
    pub n_resource_types: usize,
    pub n_severity_types: usize,
    /// Log features that behave as fault alarms.
    pub n_alarm_features: usize,
    /// Log features every id reports at a label-independent rate.
    pub n_routine_features: usize,
    /// Per-label probability that a given alarm feature is raised.
    pub alarm_rate: [f64; 3],
    /// Per-label mean extra volume of a raised alarm.
    pub alarm_volume: [f64; 3],
    pub tail_rate: f64,
    pub n_fault_events: usize,
    /// Per-label probability that an event is drawn from the fault events.
    pub fault_event_rate: [f64; 3],
    /// Per-label distribution over severity types.
    pub severity_type_probs: [Vec<f64>; 3],
    /// P(severity 2) and P(severity 1) per unit of location risk.
    pub many_per_risk: f64,
    pub few_per_risk: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n_ids: 7381,
            n_locations: 1126,
            n_log_features: 386,
            n_event_types: 53,
            n_resource_types: 10,
            n_severity_types: 5,
            n_alarm_features: 120,
            n_routine_features: 30,
            alarm_rate: [0.02, 0.08, 0.12],
            alarm_volume: [1.0, 2.0, 4.0],
            tail_rate: 0.1,
            n_fault_events: 6,
            fault_event_rate: [0.03, 0.6, 0.7],
            severity_type_probs: [
                vec![0.6, 0.37, 0.01, 0.01, 0.01],
                vec![0.1, 0.15, 0.25, 0.3, 0.2],
                vec![0.05, 0.1, 0.25, 0.35, 0.25],
            ],
            many_per_risk: 0.22,
            few_per_risk: 0.6,
            seed: 42,
        }
    }
}

impl SimConfig {
    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(FcpError::Config(m.to_string()));
        if self.n_ids == 0 || self.n_locations == 0 || self.n_event_types == 0 {
            return bad("simulator sizes must be positive");
        }
        if self.n_resource_types == 0 || self.n_severity_types == 0 {
            return bad("simulator sizes must be positive");
        }
        if self.n_alarm_features + self.n_routine_features >= self.n_log_features {
            return bad("alarm and routine features must leave a tail");
        }
        if self.n_routine_features == 0 || self.n_fault_events == 0 || self.n_fault_events > self.n_event_types {
            return bad("need routine features and 1..=n_event_types fault events");
        }
        if self.severity_type_probs.iter().any(|p| p.len() != self.n_severity_types) {
            return bad("severity type distributions must cover every severity type");
        }
        if self.many_per_risk + self.few_per_risk > 1.0 {
            return bad("label probabilities exceed one at full risk");
        }
        Ok(())
    }
}

fn zipf_weights(n: usize, exponent: f64) -> Vec<f64> {
    (1..=n).map(|k| (k as f64).powf(-exponent)).collect()
}

fn poisson<R: Rng>(lambda: f64, r: &mut R) -> u64 {
    if lambda <= 0.0 {
        return 0;
    }
    Poisson::new(lambda).expect("positive rate").sample(r) as u64
}

pub fn simulate(cfg: &SimConfig) -> Result<RawFaultTables> {
    cfg.validate()?;
    let mut r = rng::seeded(cfg.seed);
    let werr = |e: rand::distr::weighted::Error| FcpError::Config(e.to_string());

    let mut loc_pop = zipf_weights(cfg.n_locations, 0.6);
    loc_pop.shuffle(&mut r);
    let loc_dist = WeightedIndex::new(&loc_pop).map_err(werr)?;
    let beta = Beta::new(1.5, 2.0).expect("valid shape");
    let risk: Vec<f64> = (0..cfg.n_locations).map(|_| beta.sample(&mut r)).collect();

    let mut features: Vec<usize> = (1..=cfg.n_log_features).collect();
    features.shuffle(&mut r);
    let alarm = &features[..cfg.n_alarm_features];
    let routine = &features[cfg.n_alarm_features..cfg.n_alarm_features + cfg.n_routine_features];
    let tail = &features[cfg.n_alarm_features + cfg.n_routine_features..];
    let routine_dist = WeightedIndex::new(zipf_weights(routine.len(), 0.8)).map_err(werr)?;

    let mut events: Vec<usize> = (1..=cfg.n_event_types).collect();
    events.shuffle(&mut r);
    let fault_events = events[..cfg.n_fault_events].to_vec();
    let mut ev_pop = zipf_weights(cfg.n_event_types, 1.1);
    ev_pop.shuffle(&mut r);
    let ev_dist = WeightedIndex::new(&ev_pop).map_err(werr)?;
    let res_pop: Vec<f64> = (0..cfg.n_resource_types)
        .map(|k| [0.05, 0.35, 0.02, 0.01, 0.02, 0.03, 0.08, 0.4, 0.02, 0.02].get(k).copied().unwrap_or(0.02))
        .collect();
    let res_dist = WeightedIndex::new(&res_pop).map_err(werr)?;
    let sev_dist = cfg
        .severity_type_probs
        .iter()
        .map(|p| WeightedIndex::new(p).map_err(werr))
        .collect::<Result<Vec<_>>>()?;

    // ids spread over a wider range, as in the original competition files
    let mut ids: Vec<u64> = (1..=(cfg.n_ids as u64 * 5 / 2)).collect();
    ids.shuffle(&mut r);
    ids.truncate(cfg.n_ids);

    let mut t = RawFaultTables::default();
    for &id in &ids {
        let loc = loc_dist.sample(&mut r);
        let risk = risk[loc];
        let u: f64 = r.random();
        let label = if u < cfg.many_per_risk * risk {
            2
        } else if u < (cfg.many_per_risk + cfg.few_per_risk) * risk {
            1
        } else {
            0
        };
        t.train.push(TrainRow {
            id,
            location: format!("location {}", loc + 1),
            fault_severity: label as u8,
        });

        let mut volumes: BTreeMap<usize, u64> = BTreeMap::new();
        for &f in alarm {
            if r.random::<f64>() < cfg.alarm_rate[label] {
                *volumes.entry(f).or_default() += 1 + poisson(cfg.alarm_volume[label], &mut r);
            }
        }
        for _ in 0..1 + poisson(1.5, &mut r) {
            let f = routine[routine_dist.sample(&mut r)];
            *volumes.entry(f).or_default() += 1 + poisson(2.0, &mut r);
        }
        if r.random::<f64>() < cfg.tail_rate {
            let f = tail[r.random_range(0..tail.len())];
            *volumes.entry(f).or_default() += 1 + poisson(1.0, &mut r);
        }
        for (f, v) in volumes {
            t.log_feature.push(LogFeatureRow {
                id,
                token: format!("feature {f}"),
                volume: v,
            });
        }

        let mut evs: Vec<usize> = Vec::new();
        for _ in 0..1 + poisson(0.7, &mut r) {
            let e = if r.random::<f64>() < cfg.fault_event_rate[label] {
                fault_events[r.random_range(0..fault_events.len())]
            } else {
                events[ev_dist.sample(&mut r)]
            };
            if !evs.contains(&e) {
                evs.push(e);
            }
        }
        evs.sort_unstable();
        for e in evs {
            t.event_type.push(TokenRow {
                id,
                token: format!("event_type {e}"),
            });
        }

        let mut res = vec![res_dist.sample(&mut r) + 1];
        if r.random::<f64>() < 0.15 {
            let extra = res_dist.sample(&mut r) + 1;
            if extra != res[0] {
                res.push(extra);
            }
        }
        res.sort_unstable();
        for k in res {
            t.resource_type.push(TokenRow {
                id,
                token: format!("resource_type {k}"),
            });
        }
        t.severity_type.push(TokenRow {
            id,
            token: format!("severity_type {}", sev_dist[label].sample(&mut r) + 1),
        });
    }
    Ok(t)
}

/// Writes the five tables as CSV files into `dir`.
pub fn write_tables(t: &RawFaultTables, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| FcpError::io(dir, e))?;
    let mut train = String::from("id,location,fault_severity\n");
    for row in &t.train {
        train.push_str(&format!("{},{},{}\n", row.id, row.location, row.fault_severity));
    }
    write_atomic(&dir.join(TRAIN_FILE), train.as_bytes())?;
    let mut logs = String::from("id,log_feature,volume\n");
    for row in &t.log_feature {
        logs.push_str(&format!("{},{},{}\n", row.id, row.token, row.volume));
    }
    write_atomic(&dir.join(LOG_FEATURE_FILE), logs.as_bytes())?;
    for (file, column, rows) in [
        (EVENT_FILE, "event_type", &t.event_type),
        (RESOURCE_FILE, "resource_type", &t.resource_type),
        (SEVERITY_TYPE_FILE, "severity_type", &t.severity_type),
    ] {
        let mut s = format!("id,{column}\n");
        for row in rows {
            s.push_str(&format!("{},{}\n", row.id, row.token));
        }
        write_atomic(&dir.join(file), s.as_bytes())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_run_is_consistent() {
        let cfg = SimConfig {
            n_ids: 300,
            ..SimConfig::default()
        };
        let t = simulate(&cfg).unwrap();
        assert_eq!(t.train.len(), 300);
        assert_eq!(t.severity_type.len(), 300);
        let labels: Vec<u8> = t.train.iter().map(|r| r.fault_severity).collect();
        assert!(labels.contains(&0) && labels.contains(&1) && labels.contains(&2));
        assert_eq!(simulate(&cfg).unwrap(), t);
    }
}
