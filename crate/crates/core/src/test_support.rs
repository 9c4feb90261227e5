//! Fixture builders shared by unit tests.

use crate::geometry::BBox;
use crate::scene::{Container, ContainerLabel, ContainerTable};

/// `n` square drawers in a row, ids 1..=n.
pub fn table_with(image_id: &str, n: u32) -> ContainerTable {
    let containers = (1..=n)
        .map(|i| {
            let bbox = BBox::new(i as f64 * 20.0, 0.0, i as f64 * 20.0 + 10.0, 10.0).unwrap();
            Container {
                global_id: i as u64,
                local_id: i,
                raw_label: "drawer".into(),
                label: Some(ContainerLabel::Drawer),
                confidence: 0.9,
                polygon: bbox.to_polygon(),
                bbox,
                width: 10.0,
                height: 10.0,
                aspect_class: None,
                countertop_relation: Default::default(),
                neighbor_local_ids: Default::default(),
                anchor_relations: vec![],
                closest_to_anchors: Default::default(),
            }
        })
        .collect();
    ContainerTable {
        schema_version: 1,
        image_id: image_id.into(),
        image_path: None,
        image_width: 1000,
        image_height: 100,
        containers,
        anchors: vec![],
        countertop: None,
        featurized: true,
    }
}
