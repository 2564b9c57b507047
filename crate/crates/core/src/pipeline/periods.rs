use serde::Serialize;

/// A training period: the snapshot years it covers and the snapshot whose
/// income serves as its lag.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Period {
    pub id: &'static str,
    pub name: &'static str,
    pub snapshots: Vec<i32>,
    pub prev_end: Option<i32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PeriodGrid {
    periods: Vec<Period>,
}

impl PeriodGrid {
    pub fn standard() -> Self {
        let span = |a: i32, b: i32| (a..=b).step_by(50).collect::<Vec<_>>();
        let periods = vec![
            Period {
                id: "late_middle_ages",
                name: "Late Middle Ages",
                snapshots: span(1300, 1500),
                prev_end: None,
            },
            Period {
                id: "early_modern",
                name: "Early Modern Period",
                snapshots: span(1550, 1750),
                prev_end: Some(1500),
            },
            Period {
                id: "age_of_revolutions",
                name: "Age of Revolutions",
                snapshots: span(1800, 1850),
                prev_end: Some(1750),
            },
            Period {
                id: "machine_age",
                name: "Machine Age",
                snapshots: span(1900, 1950),
                prev_end: Some(1850),
            },
            Period {
                id: "information_age",
                name: "Information Age",
                snapshots: vec![2000],
                prev_end: Some(1950),
            },
        ];
        Self { periods }
    }

    pub fn periods(&self) -> &[Period] {
        &self.periods
    }

    pub fn period_of(&self, year: i32) -> Option<&Period> {
        self.periods.iter().find(|p| p.snapshots.contains(&year))
    }

    pub fn get(&self, id: &str) -> Option<&Period> {
        self.periods.iter().find(|p| p.id == id)
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.periods.iter().position(|p| p.id == id)
    }

    pub fn snapshot_years(&self) -> Vec<i32> {
        self.periods.iter().flat_map(|p| p.snapshots.iter().copied()).collect()
    }
}
