//! Triangulate a rendered landmark set and evaluate the edge-length loss
//! against a slightly moved copy.

use craniofit::fitting::{edge_loss, landmark_vertices, render_landmarks, REDUCED_IDS};
use craniofit::geometry::{delaunay, Point2};
use craniofit::inpaint::{SceneConfig, SyntheticScene};
use craniofit::render::LandmarkDecoder;
use craniofit::SemanticCodeVector;

fn main() -> craniofit::Result<()> {
    let scene = SyntheticScene::build(SceneConfig::default())?;
    let dec = LandmarkDecoder::new(&scene.model, scene.intrinsics, landmark_vertices(&scene.model, &REDUCED_IDS)?)?;
    let x = SemanticCodeVector::from_geometry(&scene.truth)?;
    let set = render_landmarks(&dec, &REDUCED_IDS, &x)?;
    let graph = delaunay(&set.points)?;
    println!("{} landmarks, {} triangles, {} edges", graph.points.len(), graph.triangles.len(), graph.edges.len());

    let target = graph.edge_lengths();
    for shift in [0.0, 0.5, 2.0] {
        // stretch horizontally about the centroid
        let c = set.points.iter().sum::<Point2>() / set.points.len() as f64;
        let moved: Vec<Point2> =
            set.points.iter().map(|p| Point2::new(c.x + (p.x - c.x) * (1.0 + shift / 100.0), p.y)).collect();
        println!("stretch {shift:>3}%  E_m = {:.4}", edge_loss(&graph, &target, &moved));
    }
    Ok(())
}
