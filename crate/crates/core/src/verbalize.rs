//! Renders featurized containers as one-line natural-language descriptions.
//!
//! Template: `Container {id}: {label}[ {aspect}][ {countertop side}][, located {anchors}].`
//! Only anchors that are close to the container, or whose closest container
//! this is, are mentioned, nearest first. Numbers other than the id never
//! appear.

use crate::error::{Error, Result};
use crate::scene::{AnchorRelation, AspectClass, Container, ContainerTable, CountertopRelation};

pub fn describe_container(c: &Container) -> Result<String> {
    let label = c.label.ok_or(Error::UnresolvedLabel(c.local_id))?;
    let mut line = format!("Container {}: {}", c.local_id, label.words());

    if let Some(aspect) = c.aspect_class {
        if aspect != AspectClass::SquareLike {
            line.push(' ');
            line.push_str(aspect.phrase());
        }
    }
    match c.countertop_relation {
        CountertopRelation::Above => line.push_str(" above the countertop"),
        CountertopRelation::Below => line.push_str(" below the countertop"),
        CountertopRelation::Unknown => {}
    }

    let mut mentioned: Vec<&AnchorRelation> = c
        .anchor_relations
        .iter()
        .filter(|r| r.is_close || c.closest_to_anchors.contains(&r.anchor_label))
        .collect();
    mentioned.sort_by(|a, b| {
        a.distance
            .total_cmp(&b.distance)
            .then_with(|| a.anchor_label.cmp(&b.anchor_label))
    });
    let phrases: Vec<String> = mentioned
        .iter()
        .map(|r| format!("{} the {}", r.direction.phrase(), r.anchor_label))
        .collect();
    if !phrases.is_empty() {
        line.push_str(", located ");
        line.push_str(&join_with_and(&phrases));
    }
    line.push('.');
    Ok(line)
}

/// `a`, `a, and b`, `a, b, and c`.
fn join_with_and(parts: &[String]) -> String {
    match parts {
        [] => String::new(),
        [only] => only.clone(),
        [init @ .., last] => format!("{}, and {}", init.join(", "), last),
    }
}

/// One line per container in local-id order, without the `- ` bullet.
pub fn describe_scene(table: &ContainerTable) -> Result<Vec<String>> {
    if table.containers.is_empty() {
        return Err(Error::EmptyScene);
    }
    let mut containers: Vec<&Container> = table.containers.iter().collect();
    containers.sort_by_key(|c| c.local_id);
    containers.into_iter().map(describe_container).collect()
}
