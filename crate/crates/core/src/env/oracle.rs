//! Exact expected returns by enumerating every action and every request
//! outcome (nothing, click only, click and order) up to the horizon.

use super::{Env, SessionState};
use crate::error::{Error, Result};
use crate::mdp::{ActionIndex, StateVector};
use crate::moq::{reward, FeedbackEvent, ObjectiveSpec};

const MAX_POSITIONS: usize = 6;
const MAX_HORIZON: usize = 4;

impl Env {
    fn check_small(&self, session: &SessionState, gamma: f64) -> Result<()> {
        if self.positions() > MAX_POSITIONS || session.horizon > MAX_HORIZON {
            return Err(Error::TooLarge(format!(
                "L = {}, T = {} (limit L ≤ {MAX_POSITIONS}, T ≤ {MAX_HORIZON})",
                self.positions(),
                session.horizon
            )));
        }
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::InvalidArgument(format!(
                "discount {gamma} outside [0, 1]"
            )));
        }
        Ok(())
    }

    /// Outcome distribution of one request and the successor session for each.
    fn branches(
        &self,
        s: &SessionState,
        a: ActionIndex,
    ) -> Result<Vec<(f64, FeedbackEvent, SessionState)>> {
        let (pc, po) = self.event_probabilities(s, a)?;
        let placement = self.placement(s, a)?;
        let mut out = Vec::with_capacity(3);
        for (p, ev) in [
            (1.0 - pc, FeedbackEvent::all()[0]),
            (pc - po, FeedbackEvent::all()[1]),
            (po, FeedbackEvent::all()[2]),
        ] {
            let mut next = s.clone();
            next.shown = placement
                .iter()
                .map(|i| i.map(|i| s.items[i].item_id))
                .collect();
            next.step += 1;
            next.clicks += u32::from(ev.clicked());
            next.orders += u32::from(ev.ordered());
            next.observation.set_feedback_totals(
                next.clicks,
                next.orders,
                next.step,
                next.horizon,
            )?;
            out.push((p, ev, next));
        }
        Ok(out)
    }

    /// Expected discounted return of the best history-dependent policy for
    /// `objective`, from `session` onwards. Refuses `L > 6` or `T > 4`.
    pub fn optimal_policy_value(
        &self,
        session: &SessionState,
        objective: &ObjectiveSpec,
        gamma: f64,
    ) -> Result<f64> {
        self.check_small(session, gamma)?;
        self.expectimax(session, objective, gamma)
    }

    fn expectimax(&self, s: &SessionState, objective: &ObjectiveSpec, gamma: f64) -> Result<f64> {
        if s.is_terminal() {
            return Ok(0.0);
        }
        let mut best = f64::NEG_INFINITY;
        for a in 0..self.positions() {
            let mut v = 0.0;
            for (p, ev, next) in self.branches(s, ActionIndex::new(a, self.positions())?)? {
                v += p
                    * (reward(objective, ev).value()
                        + gamma * self.expectimax(&next, objective, gamma)?);
            }
            best = best.max(v);
        }
        Ok(best)
    }

    /// Expected discounted return of a deterministic policy on observations.
    pub fn policy_value<P>(
        &self,
        session: &SessionState,
        objective: &ObjectiveSpec,
        gamma: f64,
        policy: &mut P,
    ) -> Result<f64>
    where
        P: FnMut(&StateVector) -> Result<ActionIndex>,
    {
        self.check_small(session, gamma)?;
        self.follow(session, objective, gamma, policy)
    }

    fn follow<P>(
        &self,
        s: &SessionState,
        objective: &ObjectiveSpec,
        gamma: f64,
        policy: &mut P,
    ) -> Result<f64>
    where
        P: FnMut(&StateVector) -> Result<ActionIndex>,
    {
        if s.is_terminal() {
            return Ok(0.0);
        }
        let a = policy(&s.observation)?;
        let mut v = 0.0;
        for (p, ev, next) in self.branches(s, a)? {
            v += p
                * (reward(objective, ev).value()
                    + gamma * self.follow(&next, objective, gamma, policy)?);
        }
        Ok(v)
    }

    /// Expected discounted return when every action is uniform at random.
    pub fn random_policy_value(
        &self,
        session: &SessionState,
        objective: &ObjectiveSpec,
        gamma: f64,
    ) -> Result<f64> {
        self.check_small(session, gamma)?;
        self.average(session, objective, gamma)
    }

    fn average(&self, s: &SessionState, objective: &ObjectiveSpec, gamma: f64) -> Result<f64> {
        if s.is_terminal() {
            return Ok(0.0);
        }
        let mut total = 0.0;
        for a in 0..self.positions() {
            for (p, ev, next) in self.branches(s, ActionIndex::new(a, self.positions())?)? {
                total += p
                    * (reward(objective, ev).value()
                        + gamma * self.average(&next, objective, gamma)?);
            }
        }
        Ok(total / self.positions() as f64)
    }
}
