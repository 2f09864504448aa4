"""Synthetic fixtures for offline runs: a COCO-style annotation payload whose
images all contain clustered (overlapping) objects."""

import random

TOY_CATEGORIES = ("person", "tie", "book", "cup", "chair")


def make_toy_coco(num_images=10, seed=7, width=640, height=480):
    rng = random.Random(seed)
    categories = [{"id": i + 1, "name": name} for i, name in enumerate(TOY_CATEGORIES)]
    images = []
    annotations = []
    ann_id = 1
    for n in range(num_images):
        image_id = 1000 + n
        images.append({"id": image_id, "width": width, "height": height, "file_name": f"{image_id}.jpg"})
        # chain boxes off one another so every image has overlapping pairs
        x = rng.randint(40, width // 2)
        y = rng.randint(40, height // 2)
        for _ in range(rng.randint(2, 5)):
            w = rng.randint(60, 120)
            h = rng.randint(60, 120)
            x = max(0, min(x, width - w - 1))
            y = max(0, min(y, height - h - 1))
            annotations.append(
                {
                    "id": ann_id,
                    "image_id": image_id,
                    "category_id": rng.randint(1, len(TOY_CATEGORIES)),
                    "bbox": [x, y, w, h],
                }
            )
            ann_id += 1
            x += rng.randint(-w // 3, w // 3)
            y += rng.randint(-h // 3, h // 3)
    return {"images": images, "annotations": annotations, "categories": categories}
