//! Reporting helpers for the acceptance suite in `tests/acceptance.rs`.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    /// A data-dependent miss on a data release other than the frozen one.
    Warn,
    Fail,
}

/// One acceptance criterion and the sub-checks that decided it.
#[derive(Debug, Clone)]
pub struct Criterion {
    pub id: u32,
    pub title: &'static str,
    pub verdict: Verdict,
    pub notes: Vec<String>,
}

impl Criterion {
    pub fn new(id: u32, title: &'static str) -> Self {
        Self { id, title, verdict: Verdict::Pass, notes: Vec::new() }
    }

    pub fn check(&mut self, ok: bool, note: impl Into<String>) {
        let note = note.into();
        self.notes.push(format!("{} {note}", if ok { "ok  " } else { "MISS" }));
        if !ok {
            self.verdict = Verdict::Fail;
        }
    }

    /// Marks the criterion failed because it could not be evaluated.
    pub fn blocked(&mut self, why: &str) {
        self.notes.push(format!("blocked: {why}"));
        self.verdict = Verdict::Fail;
    }

    /// Turns a failure into a warning, recording why.
    pub fn downgrade(&mut self, why: String) {
        if self.verdict == Verdict::Fail {
            self.verdict = Verdict::Warn;
            self.notes.push(why);
        }
    }

    pub fn render(&self) -> String {
        let tag = match self.verdict {
            Verdict::Pass => "PASS",
            Verdict::Warn => "WARN",
            Verdict::Fail => "FAIL",
        };
        let mut out = format!("{tag} criterion {}: {}\n", self.id, self.title);
        for n in &self.notes {
            out.push_str(&format!("       {n}\n"));
        }
        out
    }
}

/// Counts `(passed, warned, failed)`.
pub fn tally(criteria: &[Criterion]) -> (usize, usize, usize) {
    let count = |v| criteria.iter().filter(|c| c.verdict == v).count();
    (count(Verdict::Pass), count(Verdict::Warn), count(Verdict::Fail))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_miss_fails_the_criterion() {
        let mut c = Criterion::new(1, "t");
        c.check(true, "a");
        assert_eq!(c.verdict, Verdict::Pass);
        c.check(false, "b");
        c.check(true, "c");
        assert_eq!(c.verdict, Verdict::Fail);
        assert!(c.render().starts_with("FAIL criterion 1: t\n"));
    }

    #[test]
    fn only_failures_downgrade() {
        let mut c = Criterion::new(2, "t");
        c.downgrade("x".into());
        assert_eq!(c.verdict, Verdict::Pass);
        assert!(c.notes.is_empty());
        c.blocked("no data");
        c.downgrade("x".into());
        assert_eq!(c.verdict, Verdict::Warn);
        assert_eq!(tally(&[c]), (0, 1, 0));
    }
}
