//! The 40 object categories, zero-indexed.

pub const CATEGORY_COUNT: usize = 40;

pub const NAMES: [&str; CATEGORY_COUNT] = [
    "wall",
    "floor",
    "cabinet",
    "bed",
    "chair",
    "sofa",
    "table",
    "door",
    "window",
    "bookshelf",
    "picture",
    "counter",
    "blinds",
    "desk",
    "shelves",
    "curtain",
    "dresser",
    "pillow",
    "mirror",
    "floor mat",
    "clothes",
    "ceiling",
    "books",
    "refrigerator",
    "television",
    "paper",
    "towel",
    "shower curtain",
    "box",
    "whiteboard",
    "person",
    "night stand",
    "toilet",
    "sink",
    "lamp",
    "bathtub",
    "bag",
    "otherstructure",
    "otherfurniture",
    "otherprop",
];

pub const WALL: u8 = 0;
pub const FLOOR: u8 = 1;
pub const CABINET: u8 = 2;
pub const BED: u8 = 3;
pub const CHAIR: u8 = 4;
pub const SOFA: u8 = 5;
pub const TABLE: u8 = 6;
pub const BOOKSHELF: u8 = 9;
pub const PICTURE: u8 = 10;
pub const DESK: u8 = 13;
pub const DRESSER: u8 = 16;
pub const PILLOW: u8 = 17;
pub const MIRROR: u8 = 18;
pub const CEILING: u8 = 21;
pub const BOOKS: u8 = 22;
pub const TELEVISION: u8 = 24;
pub const BOX: u8 = 28;
pub const WHITEBOARD: u8 = 29;
pub const NIGHT_STAND: u8 = 31;
pub const SINK: u8 = 33;
pub const LAMP: u8 = 34;
pub const BAG: u8 = 36;
pub const OTHER_STRUCTURE: u8 = 37;
pub const OTHER_FURNITURE: u8 = 38;
pub const OTHER_PROP: u8 = 39;

pub fn name(category: u8) -> Option<&'static str> {
    NAMES.get(category as usize).copied()
}

pub fn is_layout(category: u8) -> bool {
    matches!(category, WALL | FLOOR | CEILING)
}

/// Generic catch-all categories whose models are plain cuboids and may be
/// stretched far more than a retrieved model.
pub fn is_generic(category: u8) -> bool {
    matches!(category, OTHER_STRUCTURE | OTHER_FURNITURE)
}
