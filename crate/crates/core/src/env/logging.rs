//! Production traffic before any allocation policy: every item is shown at
//! its original rank, and the logged pCTR is the production model's
//! prediction for that slot.

use super::Env;
use crate::error::Result;
use crate::pda::{ClickRecord, LoggedItem, LoggedSession};
use crate::rng::{streams, SeededRng};

#[derive(Debug, Clone, PartialEq)]
pub struct ProductionLog {
    pub sessions: Vec<LoggedSession>,
    pub clicks: Vec<ClickRecord>,
}

impl Env {
    /// Logs `sessions` requests drawn from seeds `first_seed..`, one page
    /// per request, with clicks from the true model.
    pub fn production_log(&self, first_seed: u64, sessions: usize) -> Result<ProductionLog> {
        let mut log = ProductionLog {
            sessions: Vec::with_capacity(sessions),
            clicks: Vec::with_capacity(sessions * self.positions()),
        };
        for k in 0..sessions as u64 {
            let seed = first_seed.wrapping_add(k);
            let (session, obs) = self.reset(seed)?;
            let mut rng = SeededRng::new(seed, streams::LOGGING);
            let mut items = Vec::with_capacity(session.items.len());
            for (r, it) in session.items.iter().enumerate() {
                let predicted = session.predicted[r];
                let (u_click, u_order) = (rng.uniform(), rng.uniform());
                let clicked = u_click < it.base_pctr * self.bias.get(r);
                log.clicks.push(ClickRecord {
                    position: r,
                    clicked,
                    ordered: clicked && u_order < it.base_pcvr,
                    item_id: it.item_id,
                    pctr: (predicted.0 * self.bias.get(r)).clamp(1e-6, 1.0),
                });
                items.push(LoggedItem {
                    item_id: it.item_id,
                    logged_position: r,
                    pctr: (predicted.0 * self.bias.get(r)).clamp(1e-6, 1.0),
                    pcvr: predicted.1,
                });
            }
            log.sessions.push(LoggedSession {
                state: obs,
                items,
                target: session.target,
            });
        }
        Ok(log)
    }
}
