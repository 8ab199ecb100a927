use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::trajectory::{GpsRecord, Staypoint};
use crate::types::PlaceId;

use super::layout::{Layout, PlaceType};
use super::CitySpec;

const MINUTE: i64 = 60;
/// Every trip takes this long, whatever its length.
pub const TRAVEL_S: i64 = 30 * MINUTE;
/// Shortest stay the routine produces, above the 30 min staypoint threshold.
pub const MIN_STAY_S: i64 = 45 * MINUTE;
/// Consecutive places of one agent are at least this many cells apart, so
/// their stays never merge.
pub const MIN_CELL_GAP: u32 = 2;
/// GPS sampling interval while staying and while moving.
pub const STAY_FIX_S: i64 = 15 * MINUTE;
pub const TRAVEL_FIX_S: i64 = 2 * MINUTE;
/// Fixes closer than this to either end of a trip are not emitted, so stays
/// keep their scheduled bounds.
pub const TRIP_END_QUIET_M: f64 = 1500.0;

const WORKER_SHARE: f64 = 0.75;
/// Chance that a worker spends part of the afternoon at another business.
const MEETING_P: f64 = 0.3;
const EVENING_SHOP_P: f64 = 0.3;
const WEEKDAY_SHOP_P: f64 = 0.5;
const WEEKDAY_FRIEND_P: f64 = 0.25;
const WEEKEND_SHOP_P: f64 = 0.7;
const WEEKEND_FRIEND_P: f64 = 0.35;
const FARM_VISIT_P: f64 = 0.02;
const EVENING_ERRAND_P: f64 = 0.1;
const WEEKDAY_ERRAND_P: f64 = 0.35;
const WEEKEND_ERRAND_P: f64 = 0.3;

/// Long-lived traits of one agent. Shops, errands, visited friends and
/// meetings are drawn per trip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentTruth {
    pub user_id: String,
    pub home: PlaceId,
    pub work: Option<PlaceId>,
}

/// Weighted draw of up to `k` distinct places of one type that keep the
/// minimum cell gap to every place in `avoid`.
fn draw_places(
    layout: &Layout,
    candidates: &[PlaceId],
    avoid: &[PlaceId],
    k: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<PlaceId> {
    let mut pool: Vec<PlaceId> = candidates
        .iter()
        .copied()
        .filter(|&p| avoid.iter().all(|&a| layout.cell_distance(p, a) >= MIN_CELL_GAP))
        .collect();
    let mut out = Vec::with_capacity(k);
    while out.len() < k && !pool.is_empty() {
        let weights: Vec<f64> = pool.iter().map(|&p| layout.weight(p)).collect();
        let Ok(dist) = WeightedIndex::new(&weights) else {
            break;
        };
        out.push(pool.swap_remove(dist.sample(rng)));
    }
    out
}

pub(crate) struct TypedPlaces {
    pub business: Vec<PlaceId>,
    pub shopping: Vec<PlaceId>,
    pub residential: Vec<PlaceId>,
    pub farmland: Vec<PlaceId>,
    pub other: Vec<PlaceId>,
}

impl TypedPlaces {
    pub fn new(layout: &Layout) -> Self {
        TypedPlaces {
            business: layout.places_of(PlaceType::Business),
            shopping: layout.places_of(PlaceType::Shopping),
            residential: layout.places_of(PlaceType::Residential),
            farmland: layout.places_of(PlaceType::Farmland),
            other: layout.places_of(PlaceType::Other),
        }
    }
}

/// Homes and workplaces handed out in turn over shuffled place lists, so
/// every home houses about as many agents as any other and every business
/// employs about as many workers.
pub(crate) struct Allocation {
    homes: Vec<PlaceId>,
    jobs: Vec<PlaceId>,
    next_home: usize,
    next_job: usize,
}

impl Allocation {
    pub fn new(places: &TypedPlaces, rng: &mut ChaCha8Rng) -> Self {
        let mut homes = places.residential.clone();
        let mut jobs = places.business.clone();
        homes.shuffle(rng);
        jobs.shuffle(rng);
        Allocation {
            homes,
            jobs,
            next_home: 0,
            next_job: 0,
        }
    }

    fn home(&mut self) -> PlaceId {
        let home = self.homes[self.next_home % self.homes.len()];
        self.next_home += 1;
        home
    }

    /// The next business in turn that keeps the cell gap to `home`.
    fn job(&mut self, layout: &Layout, home: PlaceId) -> Option<PlaceId> {
        let n = self.jobs.len();
        let offset = (0..n).find(|k| layout.cell_distance(self.jobs[(self.next_job + k) % n], home) >= MIN_CELL_GAP)?;
        let job = self.jobs[(self.next_job + offset) % n];
        self.next_job += 1;
        Some(job)
    }
}

pub(crate) fn draw_agent(user_id: String, layout: &Layout, alloc: &mut Allocation, rng: &mut ChaCha8Rng) -> AgentTruth {
    let home = alloc.home();
    let work = if rng.random_bool(WORKER_SHARE) {
        alloc.job(layout, home)
    } else {
        None
    };
    AgentTruth { user_id, home, work }
}

/// A planned visit away from home, in epoch seconds.
#[derive(Debug, Clone, Copy)]
struct Activity {
    place: PlaceId,
    start: i64,
    end: i64,
}

struct Planner<'a> {
    rng: &'a mut ChaCha8Rng,
    jitter: Option<Normal<f64>>,
    day_start: i64,
}

impl Planner<'_> {
    /// Local clock time `hh:mm` of the current day plus start-time noise,
    /// clamped to two standard deviations and rounded to the minute.
    fn at(&mut self, hour: i64, minute: i64) -> i64 {
        let noise = match &self.jitter {
            Some(n) => {
                let sd = n.std_dev();
                n.sample(self.rng).clamp(-2.0 * sd, 2.0 * sd).round() as i64
            }
            None => 0,
        };
        self.day_start + (hour * 60 + minute + noise) * MINUTE
    }

    fn minutes(&mut self, lo: i64, hi: i64) -> i64 {
        self.rng.random_range(lo..=hi) * MINUTE
    }

    fn pick(&mut self, from: &[PlaceId]) -> Option<PlaceId> {
        (!from.is_empty()).then(|| from[self.rng.random_range(0..from.len())])
    }

    /// A popularity-weighted place of one type away from `avoid`.
    fn visit(&mut self, layout: &Layout, candidates: &[PlaceId], avoid: &[PlaceId]) -> Option<PlaceId> {
        draw_places(layout, candidates, avoid, 1, self.rng).first().copied()
    }
}

/// Away-from-home activities of one day. Weekdays are days 0-4 of each week.
fn plan_day(
    agent: &AgentTruth,
    day: u32,
    planner: &mut Planner<'_>,
    layout: &Layout,
    places: &TypedPlaces,
) -> Vec<Activity> {
    let mut acts = Vec::new();
    let weekday = day % 7 < 5;
    if weekday {
        if let Some(work) = agent.work {
            let mut start = planner.at(9, 0);
            let end = planner.at(18, 0);
            if planner.rng.random_bool(MEETING_P) {
                if let Some(place) = planner.visit(layout, &places.business, &[work]) {
                    let meet = planner.at(13, 0);
                    let meet_end = meet + planner.minutes(60, 90);
                    acts.push(Activity {
                        place: work,
                        start,
                        end: meet - TRAVEL_S,
                    });
                    acts.push(Activity {
                        place,
                        start: meet,
                        end: meet_end,
                    });
                    start = meet_end + TRAVEL_S;
                }
            }
            acts.push(Activity { place: work, start, end });
            if planner.rng.random_bool(EVENING_SHOP_P) {
                if let Some(shop) = planner.visit(layout, &places.shopping, &[agent.home, work]) {
                    let start = end + TRAVEL_S;
                    let end = start + planner.minutes(60, 120);
                    acts.push(Activity { place: shop, start, end });
                }
            } else if planner.rng.random_bool(EVENING_ERRAND_P) {
                if let Some(place) = planner.visit(layout, &places.other, &[agent.home]) {
                    let start = end + TRAVEL_S;
                    let end = start + planner.minutes(45, 75);
                    acts.push(Activity { place, start, end });
                }
            }
        } else {
            if planner.rng.random_bool(WEEKDAY_SHOP_P) {
                if let Some(shop) = planner.visit(layout, &places.shopping, &[agent.home]) {
                    let start = planner.at(10, 30);
                    let end = start + planner.minutes(60, 150);
                    acts.push(Activity { place: shop, start, end });
                }
            }
            if planner.rng.random_bool(WEEKDAY_ERRAND_P) {
                if let Some(place) = planner.visit(layout, &places.other, &[agent.home]) {
                    let start = planner.at(13, 30);
                    let end = start + planner.minutes(45, 90);
                    acts.push(Activity { place, start, end });
                }
            }
            if planner.rng.random_bool(WEEKDAY_FRIEND_P) {
                if let Some(friend) = planner.visit(layout, &places.residential, &[agent.home]) {
                    let start = planner.at(15, 0);
                    let end = start + planner.minutes(90, 150);
                    acts.push(Activity { place: friend, start, end });
                }
            }
        }
    } else {
        if planner.rng.random_bool(FARM_VISIT_P) {
            let far: Vec<PlaceId> = places
                .farmland
                .iter()
                .copied()
                .filter(|&f| layout.cell_distance(f, agent.home) >= MIN_CELL_GAP)
                .collect();
            if let Some(farm) = planner.pick(&far) {
                let start = planner.day_start + 8 * 3600;
                let end = start + planner.minutes(60, 120);
                acts.push(Activity { place: farm, start, end });
            }
        }
        if planner.rng.random_bool(WEEKEND_ERRAND_P) {
            if let Some(place) = planner.visit(layout, &places.other, &[agent.home]) {
                let start = planner.at(9, 30);
                let end = start + planner.minutes(60, 90);
                acts.push(Activity { place, start, end });
            }
        }
        if planner.rng.random_bool(WEEKEND_SHOP_P) {
            if let Some(shop) = planner.visit(layout, &places.shopping, &[agent.home]) {
                let start = planner.at(11, 0);
                let end = start + planner.minutes(90, 180);
                acts.push(Activity { place: shop, start, end });
            }
        }
        if planner.rng.random_bool(WEEKEND_FRIEND_P) {
            if let Some(friend) = planner.visit(layout, &places.residential, &[agent.home]) {
                let start = planner.at(15, 30);
                let end = start + planner.minutes(120, 180);
                acts.push(Activity { place: friend, start, end });
            }
        }
    }
    acts
}

/// Scheduled stays of one agent over the whole period, starting and ending
/// at home. Returns to home whenever the gap between activities allows a
/// stay of at least [`MIN_STAY_S`]; otherwise moves directly, dropping
/// activities that would be too short or too close to the previous place.
pub(crate) fn schedule_agent(
    agent: &AgentTruth,
    spec: &CitySpec,
    layout: &Layout,
    places: &TypedPlaces,
    rng: &mut ChaCha8Rng,
) -> Vec<Staypoint> {
    let jitter = (spec.time_jitter_min > 0.0).then(|| Normal::new(0.0, spec.time_jitter_min).unwrap());
    let (t0, t_end) = (spec.start_epoch, spec.end_epoch());
    let mut stays = vec![(agent.home, t0, t_end)];
    for day in 0..spec.days {
        let mut planner = Planner {
            rng: &mut *rng,
            jitter,
            day_start: t0 + day as i64 * 86_400,
        };
        for mut act in plan_day(agent, day, &mut planner, layout, places) {
            let &(cur_place, cur_enter, cur_leave) = stays.last().unwrap();
            if cur_place == agent.home {
                act.start = act.start.max(cur_enter + MIN_STAY_S + TRAVEL_S);
            } else if act.start - cur_leave >= 2 * TRAVEL_S + MIN_STAY_S {
                stays.push((agent.home, cur_leave + TRAVEL_S, t_end));
                act.start = act.start.max(cur_leave + TRAVEL_S + MIN_STAY_S + TRAVEL_S);
            } else if layout.cell_distance(cur_place, act.place) >= MIN_CELL_GAP {
                act.start = act.start.max(cur_leave + TRAVEL_S);
            } else {
                continue;
            }
            if act.end - act.start < MIN_STAY_S || act.end + TRAVEL_S + MIN_STAY_S > t_end {
                continue;
            }
            let last = stays.last_mut().unwrap();
            last.2 = act.start - TRAVEL_S;
            stays.push((act.place, act.start, act.end));
        }
        // Back home for the night.
        let &(cur_place, _, cur_leave) = stays.last().unwrap();
        if cur_place != agent.home {
            stays.push((agent.home, cur_leave + TRAVEL_S, t_end));
        }
    }
    stays
        .into_iter()
        .map(|(place, enter, leave)| Staypoint {
            place,
            enter_time: enter,
            duration: leave - enter,
        })
        .collect()
}

/// GPS fixes for a schedule: one every [`STAY_FIX_S`] during each stay plus
/// one at its end, and one every [`TRAVEL_FIX_S`] along the straight trip
/// between consecutive stays, away from both ends.
pub(crate) fn render_gps(
    user_id: &str,
    stays: &[Staypoint],
    layout: &Layout,
    sigma_m: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<GpsRecord> {
    let proj = layout.grid.projection();
    let mut out = Vec::new();
    let mut emit = |t: i64, (x, y): (f64, f64), rng: &mut ChaCha8Rng| {
        let (dx, dy) = if sigma_m > 0.0 {
            (
                sigma_m * rng.sample::<f64, _>(StandardNormal),
                sigma_m * rng.sample::<f64, _>(StandardNormal),
            )
        } else {
            (0.0, 0.0)
        };
        let (longitude, latitude) = proj.unproject(x + dx, y + dy);
        out.push(GpsRecord {
            user_id: user_id.to_owned(),
            timestamp: t,
            longitude,
            latitude,
        });
    };
    for (k, sp) in stays.iter().enumerate() {
        let at = layout.point(sp.place);
        let leave = sp.enter_time + sp.duration;
        let mut t = sp.enter_time;
        while t < leave {
            emit(t, at, rng);
            t += STAY_FIX_S;
        }
        emit(leave, at, rng);
        if let Some(next) = stays.get(k + 1) {
            let to = layout.point(next.place);
            let span = (next.enter_time - leave) as f64;
            let mut t = leave + TRAVEL_FIX_S;
            while t < next.enter_time {
                let f = (t - leave) as f64 / span;
                let p = (at.0 + f * (to.0 - at.0), at.1 + f * (to.1 - at.1));
                let d_from = (p.0 - at.0).hypot(p.1 - at.1);
                let d_to = (p.0 - to.0).hypot(p.1 - to.1);
                if d_from > TRIP_END_QUIET_M && d_to > TRIP_END_QUIET_M {
                    emit(t, p, rng);
                }
                t += TRAVEL_FIX_S;
            }
        }
    }
    out
}
