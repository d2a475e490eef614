//! Random-waypoint user mobility.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};
use crate::scenario::Point;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MobilityConfig {
    pub user_density_per_km2: f64,
    pub speed_set_kmh: Vec<f64>,
    pub pause_s: f64,
}

impl Default for MobilityConfig {
    fn default() -> Self {
        Self {
            user_density_per_km2: 15.0,
            speed_set_kmh: vec![3.0, 60.0, 120.0, 240.0],
            pause_s: 0.0,
        }
    }
}

impl MobilityConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.user_density_per_km2 > 0.0 && self.user_density_per_km2.is_finite()) {
            return Err(Error::Config("mobility: user_density_per_km2 must be positive".into()));
        }
        if self.speed_set_kmh.is_empty() || self.speed_set_kmh.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::Config("mobility: speed_set_kmh must hold positive speeds".into()));
        }
        if !(self.pause_s >= 0.0 && self.pause_s.is_finite()) {
            return Err(Error::Config("mobility: pause_s must be non-negative".into()));
        }
        Ok(())
    }

    pub fn user_count(&self, area_side_m: f64) -> usize {
        let km2 = (area_side_m / 1000.0).powi(2);
        (self.user_density_per_km2 * km2).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct User {
    pub id: usize,
    pub position: Point,
    pub speed_mps: f64,
    pub waypoint: Point,
    pub pause_s: f64,
    pub pause_left_s: f64,
}

fn uniform_point(side: f64, rng: &mut impl Rng) -> Point {
    Point::new(rng.gen::<f64>() * side, rng.gen::<f64>() * side)
}

impl User {
    /// A user that never moves.
    pub fn stationary(id: usize, position: Point) -> Self {
        Self {
            id,
            position,
            speed_mps: 0.0,
            waypoint: position,
            pause_s: 0.0,
            pause_left_s: 0.0,
        }
    }

    /// Moves the user for `dt_s` seconds. Arriving at a waypoint draws a new
    /// one and the unused part of the step is spent travelling towards it.
    pub fn advance(&mut self, dt_s: f64, area_side_m: f64, rng: &mut impl Rng) {
        debug_assert!(dt_s > 0.0);
        if self.speed_mps <= 0.0 {
            return;
        }
        let mut t_left = dt_s;
        loop {
            if self.pause_left_s > 0.0 {
                let p = self.pause_left_s.min(t_left);
                self.pause_left_s -= p;
                t_left -= p;
                if t_left <= 0.0 {
                    break;
                }
            }
            let to_wp = self.position.distance(self.waypoint);
            let reach = self.speed_mps * t_left;
            if reach < to_wp {
                let f = reach / to_wp;
                self.position = Point::new(
                    self.position.x + (self.waypoint.x - self.position.x) * f,
                    self.position.y + (self.waypoint.y - self.position.y) * f,
                );
                break;
            }
            self.position = self.waypoint;
            t_left -= to_wp / self.speed_mps;
            self.waypoint = uniform_point(area_side_m, rng);
            self.pause_left_s = self.pause_s;
            if t_left <= 0.0 {
                break;
            }
        }
        self.position.x = self.position.x.clamp(0.0, area_side_m);
        self.position.y = self.position.y.clamp(0.0, area_side_m);
    }
}

/// A user together with its private random stream.
#[derive(Debug, Clone)]
pub struct Walker {
    pub user: User,
    rng: ChaCha8Rng,
}

impl Walker {
    pub fn new(user: User, seed: u64) -> Self {
        let rng = stream_rng(seed, Stream::UserMobility, user.id as u64);
        Self { user, rng }
    }

    pub fn step(&mut self, dt_s: f64, area_side_m: f64) {
        self.user.advance(dt_s, area_side_m, &mut self.rng);
    }
}

/// Places users uniformly over the square area, each with a speed drawn
/// uniformly from the configured set.
pub fn spawn_users(mob: &MobilityConfig, area_side_m: f64, seed: u64) -> Result<Vec<User>> {
    mob.validate()?;
    if !(area_side_m > 0.0) {
        return Err(Error::Config("mobility: area must be positive".into()));
    }
    let mut rng = stream_rng(seed, Stream::Spawn, 0);
    let users = (0..mob.user_count(area_side_m))
        .map(|id| {
            let position = uniform_point(area_side_m, &mut rng);
            let speed_kmh = *mob.speed_set_kmh.choose(&mut rng).expect("non-empty speed set");
            let waypoint = uniform_point(area_side_m, &mut rng);
            User {
                id,
                position,
                speed_mps: speed_kmh / 3.6,
                waypoint,
                pause_s: mob.pause_s,
                pause_left_s: 0.0,
            }
        })
        .collect();
    Ok(users)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;

    fn walker_at(pos: Point, wp: Point, speed: f64) -> User {
        User {
            id: 0,
            position: pos,
            speed_mps: speed,
            waypoint: wp,
            pause_s: 0.0,
            pause_left_s: 0.0,
        }
    }

    #[test]
    fn default_density_gives_sixty_users() {
        let users = spawn_users(&MobilityConfig::default(), 2000.0, 1).unwrap();
        assert_eq!(users.len(), 60);
        let speeds = [3.0 / 3.6, 60.0 / 3.6, 120.0 / 3.6, 240.0 / 3.6];
        for u in &users {
            assert!(speeds.contains(&u.speed_mps));
            assert!((0.0..=2000.0).contains(&u.position.x));
        }
    }

    #[test]
    fn unit_density() {
        let mob = MobilityConfig { user_density_per_km2: 1.0, ..Default::default() };
        assert_eq!(spawn_users(&mob, 1000.0, 5).unwrap().len(), 1);
    }

    #[test]
    fn spawn_is_deterministic() {
        let a = spawn_users(&MobilityConfig::default(), 2000.0, 42).unwrap();
        let b = spawn_users(&MobilityConfig::default(), 2000.0, 42).unwrap();
        assert_eq!(a, b);
        let c = spawn_users(&MobilityConfig::default(), 2000.0, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn spawn_rejects_zero_area() {
        assert!(spawn_users(&MobilityConfig::default(), 0.0, 1).is_err());
    }

    #[test]
    fn moves_exactly_speed_times_dt() {
        let mut u = walker_at(Point::new(0.0, 0.0), Point::new(10.0, 0.0), 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        u.advance(1.0, 100.0, &mut rng);
        assert!((u.position.x - 1.0).abs() < 1e-12 && u.position.y == 0.0);
        assert_eq!(u.waypoint, Point::new(10.0, 0.0));
    }

    #[test]
    fn arrival_carries_residual_distance() {
        let mut u = walker_at(Point::new(5.0, 5.0), Point::new(5.5, 5.0), 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        u.advance(1.0, 100.0, &mut rng);
        assert_ne!(u.waypoint, Point::new(5.5, 5.0));
        let residual = u.position.distance(Point::new(5.5, 5.0));
        assert!((residual - 0.5).abs() < 1e-9, "{residual}");
    }

    #[test]
    fn pause_holds_position() {
        let mut u = walker_at(Point::new(0.0, 0.0), Point::new(1.0, 0.0), 1.0);
        u.pause_s = 2.0;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        u.advance(1.0, 100.0, &mut rng);
        assert_eq!(u.position, Point::new(1.0, 0.0));
        u.advance(1.0, 100.0, &mut rng);
        assert_eq!(u.position, Point::new(1.0, 0.0));
        u.advance(1.0, 100.0, &mut rng);
        assert_eq!(u.position, Point::new(1.0, 0.0));
        u.advance(1.0, 100.0, &mut rng);
        assert!(u.position.distance(Point::new(1.0, 0.0)) > 0.0);
    }

    #[test]
    fn million_steps_stay_in_bounds() {
        let side = 2000.0;
        let mut w = Walker::new(walker_at(Point::new(3.0, 1999.0), Point::new(0.0, 0.0), 240.0 / 3.6), 11);
        for _ in 0..1_000_000 {
            let before = w.user.position;
            w.step(0.032, side);
            let p = w.user.position;
            assert!((0.0..=side).contains(&p.x) && (0.0..=side).contains(&p.y));
            assert!(before.distance(p) <= w.user.speed_mps * 0.032 + 1e-9);
        }
    }

    #[test]
    fn stationary_density_is_not_uniform() {
        // Random waypoint concentrates users in the middle of the area.
        let side = 1000.0;
        let mut w = Walker::new(walker_at(Point::new(500.0, 500.0), Point::new(10.0, 10.0), 10.0), 3);
        let (mut centre, mut total) = (0usize, 0usize);
        for _ in 0..400_000 {
            w.step(1.0, side);
            let p = w.user.position;
            if (250.0..750.0).contains(&p.x) && (250.0..750.0).contains(&p.y) {
                centre += 1;
            }
            total += 1;
        }
        assert!(centre as f64 / total as f64 > 0.3, "{centre}/{total}");
    }

    proptest! {
        #[test]
        fn displacement_is_bounded(seed in 0u64..1000, speed in 0.5f64..80.0, dt in 0.01f64..2.0) {
            let mut w = Walker::new(walker_at(Point::new(100.0, 100.0), Point::new(900.0, 50.0), speed), seed);
            for _ in 0..200 {
                let before = w.user.position;
                w.step(dt, 1000.0);
                prop_assert!(before.distance(w.user.position) <= speed * dt + 1e-9);
                prop_assert_eq!(w.user.speed_mps, speed);
            }
        }
    }
}
