use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::divergence::{self, Distribution};
use crate::error::{Error, Result};
use crate::logic::clause;
use crate::logic::tnorm::TNorm;
use crate::perception::FeatureMap;

/// Initial membership degree of a feature-predicate edge (negated literal).
pub const FEATURE_EDGE_INIT: f64 = 1.0;
/// Initial membership degree of a decision-predicate edge (plain literal).
pub const DECISION_EDGE_INIT: f64 = 0.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Thresholds {
    /// Largest JS divergence at which a map joins an existing predicate.
    pub matching: f64,
    /// Largest JS divergence at which a predicate evaluates to true.
    pub predicate: f64,
    /// Additive smoothing before maps are normalized.
    pub smoothing: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            matching: 0.1,
            predicate: 0.05,
            smoothing: divergence::DEFAULT_SMOOTHING,
        }
    }
}

impl Thresholds {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("matching", self.matching),
            ("predicate", self.predicate),
            ("smoothing", self.smoothing),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "{name} threshold must lie in (0, 1), got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// 1 when `js(map, template) <= threshold` (boundary inclusive), else 0.
pub fn predicate_value(
    map: &FeatureMap,
    template: &FeatureMap,
    threshold: f64,
    smoothing: f64,
) -> Result<f64> {
    let d = divergence::js(map, template, smoothing)?;
    Ok(if d <= threshold { 1.0 } else { 0.0 })
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroundedMap {
    pub map: FeatureMap,
    pub value: f64,
}

#[derive(Clone, Debug)]
pub struct FeaturePredicate {
    pub id: usize,
    template: FeatureMap,
    template_dist: Distribution,
    groundings: Vec<GroundedMap>,
}

impl FeaturePredicate {
    pub fn template(&self) -> &FeatureMap {
        &self.template
    }

    /// Maps routed to this predicate since the last
    /// [`LogicNetwork::clear_groundings`].
    pub fn groundings(&self) -> &[GroundedMap] {
        &self.groundings
    }
}

impl PartialEq for FeaturePredicate {
    fn eq(&self, other: &Self) -> bool {
        self.id == other.id && self.template == other.template && self.groundings == other.groundings
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Literal {
    pub predicate: usize,
    pub edge: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DecisionLiteral {
    pub class: usize,
    pub edge: usize,
}

/// A disjunction node: feature literals plus exactly one decision literal.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Clause {
    pub features: Vec<Literal>,
    pub decision: DecisionLiteral,
    pub group: usize,
}

/// A conjunction node joining every clause that shares a decision predicate.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Group {
    pub class: usize,
    pub clauses: Vec<usize>,
}

/// Where one feature map went during extension.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Route {
    pub channel: usize,
    pub predicate: usize,
    pub value: f64,
    pub spawned: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TruthCounts {
    pub count: usize,
    pub n_true: usize,
}

/// Truth statistics of the maps grounding each predicate.
///
/// A clause is grounded when every one of its feature predicates has at
/// least one map here.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Grounding {
    counts: BTreeMap<usize, TruthCounts>,
}

impl Grounding {
    pub fn from_routes(routes: &[Route]) -> Self {
        let mut g = Self::default();
        for r in routes {
            g.add(r.predicate, r.value);
        }
        g
    }

    pub fn add(&mut self, predicate: usize, value: f64) {
        let c = self.counts.entry(predicate).or_default();
        c.count += 1;
        if value == 1.0 {
            c.n_true += 1;
        }
    }

    /// Fraction of groundings on which the predicate is true.
    pub fn fraction_true(&self, predicate: usize) -> Option<f64> {
        self.counts
            .get(&predicate)
            .filter(|c| c.count > 0)
            .map(|c| c.n_true as f64 / c.count as f64)
    }

    pub fn predicates(&self) -> impl Iterator<Item = usize> + '_ {
        self.counts.keys().copied()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }
}

/// Feature predicates, decision predicates (one per class), clauses and
/// conjunction groups, with one membership degree per edge.
#[derive(Clone, Debug, PartialEq)]
pub struct LogicNetwork {
    classes: usize,
    variant: TNorm,
    thresholds: Thresholds,
    predicates: Vec<FeaturePredicate>,
    clauses: Vec<Clause>,
    groups: Vec<Group>,
    gamma: Vec<f64>,
    clauses_of_predicate: Vec<Vec<usize>>,
}

impl LogicNetwork {
    /// An empty network with one (clause-less) group per class.
    ///
    /// Clause eigenvalues are Łukasiewicz disjunctions; other variants are
    /// rejected here.
    pub fn new(classes: usize, variant: TNorm, thresholds: Thresholds) -> Result<Self> {
        if variant != TNorm::Lukasiewicz {
            return Err(Error::InvalidArgument(format!(
                "clause eigenvalues are Łukasiewicz disjunctions; `{variant}` is not supported"
            )));
        }
        if classes == 0 {
            return Err(Error::InvalidArgument("need at least one class".into()));
        }
        thresholds.validate()?;
        Ok(Self {
            classes,
            variant,
            thresholds,
            predicates: Vec::new(),
            clauses: Vec::new(),
            groups: (0..classes)
                .map(|class| Group {
                    class,
                    clauses: Vec::new(),
                })
                .collect(),
            gamma: Vec::new(),
            clauses_of_predicate: Vec::new(),
        })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn variant(&self) -> TNorm {
        self.variant
    }

    pub fn thresholds(&self) -> &Thresholds {
        &self.thresholds
    }

    pub fn predicates(&self) -> &[FeaturePredicate] {
        &self.predicates
    }

    pub fn clauses(&self) -> &[Clause] {
        &self.clauses
    }

    pub fn groups(&self) -> &[Group] {
        &self.groups
    }

    /// Groups holding at least one clause.
    pub fn active_groups(&self) -> usize {
        self.groups.iter().filter(|g| !g.clauses.is_empty()).count()
    }

    /// Membership degrees, indexed by edge.
    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    pub fn set_gamma(&mut self, gamma: Vec<f64>) -> Result<()> {
        if gamma.len() != self.gamma.len() {
            return Err(Error::shape("set_gamma", &[self.gamma.len()], &[gamma.len()]));
        }
        self.gamma = gamma;
        Ok(())
    }

    pub fn clauses_of_predicate(&self, predicate: usize) -> &[usize] {
        &self.clauses_of_predicate[predicate]
    }

    fn new_edge(&mut self, gamma: f64) -> usize {
        self.gamma.push(gamma);
        self.gamma.len() - 1
    }

    /// Adds a predicate with `template` without wiring any clause.
    pub fn add_bare_predicate(&mut self, template: FeatureMap) -> Result<usize> {
        if template.is_empty() {
            return Err(Error::InvalidArgument("an all-zero map cannot be a template".into()));
        }
        if let Some(first) = self.predicates.first() {
            if first.template.dims() != template.dims() {
                let (a, b) = (first.template.dims(), template.dims());
                return Err(Error::shape("add_predicate", &[a.0, a.1], &[b.0, b.1]));
            }
        }
        let template_dist = divergence::normalize_feature_map(&template, self.thresholds.smoothing)?;
        let id = self.predicates.len();
        self.predicates.push(FeaturePredicate {
            id,
            template,
            template_dist,
            groundings: Vec::new(),
        });
        self.clauses_of_predicate.push(Vec::new());
        Ok(id)
    }

    /// Adds a clause `OR_l g(A_l) OR g(C_class)` with the given membership
    /// degrees and files it under the group of `class`.
    pub fn add_clause(&mut self, features: &[(usize, f64)], class: usize, decision_gamma: f64) -> Result<usize> {
        if class >= self.classes {
            return Err(Error::InvalidArgument(format!("class {class} out of range")));
        }
        if let Some((p, _)) = features.iter().find(|(p, _)| *p >= self.predicates.len()) {
            return Err(Error::InvalidArgument(format!("unknown predicate {p}")));
        }
        let idx = self.clauses.len();
        let literals = features
            .iter()
            .map(|&(predicate, g)| Literal {
                predicate,
                edge: self.new_edge(g),
            })
            .collect::<Vec<_>>();
        let decision = DecisionLiteral {
            class,
            edge: self.new_edge(decision_gamma),
        };
        for l in &literals {
            let list = &mut self.clauses_of_predicate[l.predicate];
            if list.last() != Some(&idx) {
                list.push(idx);
            }
        }
        self.clauses.push(Clause {
            features: literals,
            decision,
            group: class,
        });
        self.groups[class].clauses.push(idx);
        Ok(idx)
    }

    /// New predicate wired into one clause per decision predicate, with the
    /// initial membership degrees.
    pub fn add_predicate(&mut self, template: FeatureMap) -> Result<usize> {
        let id = self.add_bare_predicate(template)?;
        for class in 0..self.classes {
            self.add_clause(&[(id, FEATURE_EDGE_INIT)], class, DECISION_EDGE_INIT)?;
        }
        Ok(id)
    }

    /// Nearest template within the matching threshold; ties go to the
    /// lowest id.
    fn nearest(&self, dist: &Distribution) -> Result<Option<(usize, f64)>> {
        let mut best: Option<(usize, f64)> = None;
        for p in &self.predicates {
            let cutoff = best.map_or(self.thresholds.matching, |(_, bd)| bd);
            // the margin absorbs rounding in the bound
            if p.template_dist.probs().len() == dist.probs().len()
                && divergence::js_lower_bound(dist, &p.template_dist) > cutoff + 1e-9
            {
                continue;
            }
            let d = divergence::js_distributions(dist, &p.template_dist)?;
            if d <= self.thresholds.matching && best.is_none_or(|(_, bd)| d < bd) {
                best = Some((p.id, d));
            }
        }
        Ok(best)
    }

    fn truth(&self, js: f64) -> f64 {
        if js <= self.thresholds.predicate {
            1.0
        } else {
            0.0
        }
    }

    /// Routes every non-empty map to its nearest predicate, spawning a new
    /// predicate (and its clauses) for maps that match nothing. Routed maps
    /// are appended to the predicates' grounding sets.
    pub fn extend(&mut self, maps: &[FeatureMap]) -> Result<Vec<Route>> {
        let mut routes = Vec::new();
        for map in maps.iter().filter(|m| !m.is_empty()) {
            let dist = divergence::normalize_feature_map(map, self.thresholds.smoothing)?;
            let route = match self.nearest(&dist)? {
                Some((predicate, d)) => Route {
                    channel: map.channel(),
                    predicate,
                    value: self.truth(d),
                    spawned: false,
                },
                None => Route {
                    channel: map.channel(),
                    predicate: self.add_predicate(map.clone())?,
                    value: 1.0,
                    spawned: true,
                },
            };
            self.predicates[route.predicate].groundings.push(GroundedMap {
                map: map.clone(),
                value: route.value,
            });
            routes.push(route);
        }
        Ok(routes)
    }

    /// Routes maps without changing the network; unmatched maps are dropped.
    pub fn route(&self, maps: &[FeatureMap]) -> Result<Vec<Route>> {
        let mut routes = Vec::new();
        for map in maps.iter().filter(|m| !m.is_empty()) {
            let dist = divergence::normalize_feature_map(map, self.thresholds.smoothing)?;
            if let Some((predicate, d)) = self.nearest(&dist)? {
                routes.push(Route {
                    channel: map.channel(),
                    predicate,
                    value: self.truth(d),
                    spawned: false,
                });
            }
        }
        Ok(routes)
    }

    pub fn ground(&self, maps: &[FeatureMap]) -> Result<Grounding> {
        Ok(Grounding::from_routes(&self.route(maps)?))
    }

    /// Grounding built from the stored grounding sets.
    pub fn stored_grounding(&self) -> Grounding {
        let mut g = Grounding::default();
        for p in &self.predicates {
            for gm in &p.groundings {
                g.add(p.id, gm.value);
            }
        }
        g
    }

    pub fn clear_groundings(&mut self) {
        self.predicates.iter_mut().for_each(|p| p.groundings.clear());
    }

    /// Eigenvalue of one clause: the mean over joint groundings of the
    /// clipped Łukasiewicz disjunction of its blended literals. `None` when
    /// some feature predicate has no grounding.
    pub fn clause_eigenvalue(&self, clause: usize, grounding: &Grounding, y: &[f64]) -> Result<Option<f64>> {
        let c = self
            .clauses
            .get(clause)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown clause {clause}")))?;
        if y.len() != self.classes {
            return Err(Error::shape("clause_eigenvalue", &[y.len()], &[self.classes]));
        }
        let Some(lits) = clause::grounded_literals(c, grounding, &self.gamma) else {
            return Ok(None);
        };
        let decision = clause::blend(y[c.decision.class], self.gamma[c.decision.edge]);
        Ok(Some(clause::evaluate(&lits, decision)?.value))
    }

    /// Membership degrees as a table: one row per decision predicate (`Y1`,
    /// `Y2`, ...), one column per feature predicate (`A1`, `A2`, ...). A cell
    /// holds the degree of the predicate's edge into that row's disjunction
    /// node, or is blank when they are not connected.
    pub fn membership_csv(&self) -> String {
        let mut out = String::from("disjunction");
        for p in &self.predicates {
            let _ = write!(out, ",A{}", p.id + 1);
        }
        out.push('\n');
        for group in &self.groups {
            let _ = write!(out, "Y{}", group.class + 1);
            for p in &self.predicates {
                let cell = self.clauses_of_predicate[p.id]
                    .iter()
                    .map(|&ci| &self.clauses[ci])
                    .find(|c| c.group == group.class)
                    .and_then(|c| c.features.iter().find(|l| l.predicate == p.id))
                    .map(|l| self.gamma[l.edge]);
                match cell {
                    Some(v) => {
                        let _ = write!(out, ",{v}");
                    }
                    None => out.push(','),
                }
            }
            out.push('\n');
        }
        out
    }

    /// Rebuilds a network from stored parts (used when loading artifacts).
    pub(crate) fn from_parts(
        classes: usize,
        variant: TNorm,
        thresholds: Thresholds,
        templates: Vec<FeatureMap>,
        clauses: Vec<(Vec<(usize, f64)>, usize, f64)>,
    ) -> Result<Self> {
        let mut net = Self::new(classes, variant, thresholds)?;
        for t in templates {
            net.add_bare_predicate(t)?;
        }
        for (features, class, dg) in clauses {
            net.add_clause(&features, class, dg)?;
        }
        Ok(net)
    }
}
