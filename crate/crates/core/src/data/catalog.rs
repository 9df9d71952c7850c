use super::DataError;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Scene {
    pub index: usize,
    pub name: String,
    pub description: String,
}

/// Ordered scenes, each paired with the caption that guides its pose head.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SceneCatalog {
    scenes: Vec<Scene>,
}

impl SceneCatalog {
    /// Builds a catalog from `(name, description)` pairs, indexed in order.
    pub fn new<N: Into<String>, D: Into<String>>(entries: impl IntoIterator<Item = (N, D)>) -> Result<Self, DataError> {
        let scenes: Vec<Scene> = entries
            .into_iter()
            .enumerate()
            .map(|(index, (n, d))| Scene {
                index,
                name: n.into(),
                description: d.into(),
            })
            .collect();
        if scenes.is_empty() {
            return Err(DataError::EmptyCatalog);
        }
        for (i, s) in scenes.iter().enumerate() {
            if s.name.trim().is_empty() {
                return Err(DataError::InvalidCatalog(format!("scene {i} has an empty name")));
            }
            if s.description.trim().is_empty() {
                return Err(DataError::InvalidCatalog(format!("scene `{}` has an empty description", s.name)));
            }
            if scenes[..i].iter().any(|o| o.name == s.name) {
                return Err(DataError::InvalidCatalog(format!("duplicate scene name `{}`", s.name)));
            }
        }
        Ok(Self { scenes })
    }

    /// The seven indoor scenes with detailed spatial captions.
    pub fn seven_scenes() -> Self {
        Self::new([
            ("Chess", "A chessboard on a small table surrounded by chairs"),
            ("Fire", "A fire extinguisher on the floor beside a wall and a small table"),
            ("Heads", "Mannequin heads on a desk in front of a monitor"),
            ("Office", "Two monitors side by side on a cluttered desk with a chair in front"),
            ("Pumpkin", "A pumpkin on a shelf above a desk next to a cabinet"),
            ("Kitchen", "A kitchen counter with a sink between cupboards and a window"),
            ("Stairs", "A narrow staircase with a handrail along a wall"),
        ])
        .expect("static catalog is valid")
    }

    /// The four outdoor landmark scenes.
    pub fn cambridge() -> Self {
        Self::new([
            ("King's College", "A gothic chapel facade with tall windows and pinnacles behind a lawn"),
            ("Old Hospital", "A long stone building with arched windows along a street"),
            ("Shop Façade", "A row of shop fronts with signs above the doors and windows"),
            ("St Mary's Church", "A church tower above a stone wall and a market square"),
        ])
        .expect("static catalog is valid")
    }

    /// The first `k` scenes of `self`.
    pub fn take(&self, k: usize) -> Result<Self, DataError> {
        if k == 0 || k > self.scenes.len() {
            return Err(DataError::InvalidCatalog(format!(
                "cannot take {k} scenes from a catalog of {}",
                self.scenes.len()
            )));
        }
        Self::new(self.scenes[..k].iter().map(|s| (s.name.clone(), s.description.clone())))
    }

    pub fn len(&self) -> usize {
        self.scenes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenes.is_empty()
    }

    pub fn scenes(&self) -> &[Scene] {
        &self.scenes
    }

    pub fn get(&self, index: usize) -> Option<&Scene> {
        self.scenes.get(index)
    }

    pub fn descriptions(&self) -> impl Iterator<Item = &str> {
        self.scenes.iter().map(|s| s.description.as_str())
    }
}
