//! Scenes shipped with the crate. Each has a scene document and a default
//! robot path under `scenes/`.

use super::{RobotPathSpec, Scene};

pub struct ShippedScene {
    pub name: &'static str,
    scene_json: &'static str,
    path_json: &'static str,
}

impl ShippedScene {
    pub fn scene(&self) -> Scene {
        Scene::from_json(self.scene_json).expect("shipped scene is valid")
    }

    pub fn robot_path(&self) -> RobotPathSpec {
        RobotPathSpec::from_json(self.path_json).expect("shipped robot path is valid")
    }

    pub fn scene_json(&self) -> &'static str {
        self.scene_json
    }

    pub fn path_json(&self) -> &'static str {
        self.path_json
    }
}

macro_rules! shipped {
    ($name:literal) => {
        ShippedScene {
            name: $name,
            scene_json: include_str!(concat!("../../scenes/", $name, ".scene.json")),
            path_json: include_str!(concat!("../../scenes/", $name, ".path.json")),
        }
    };
}

pub static SCENES: [ShippedScene; 4] = [
    shipped!("corridor_loop"),
    shipped!("office_l_path"),
    shipped!("junction"),
    shipped!("queue"),
];

pub fn by_name(name: &str) -> Option<&'static ShippedScene> {
    SCENES.iter().find(|s| s.name == name)
}

pub fn corridor_loop() -> (Scene, RobotPathSpec) {
    let s = &SCENES[0];
    (s.scene(), s.robot_path())
}

pub fn office_l_path() -> (Scene, RobotPathSpec) {
    let s = &SCENES[1];
    (s.scene(), s.robot_path())
}

pub fn junction() -> (Scene, RobotPathSpec) {
    let s = &SCENES[2];
    (s.scene(), s.robot_path())
}

pub fn queue() -> (Scene, RobotPathSpec) {
    let s = &SCENES[3];
    (s.scene(), s.robot_path())
}
