/** Image-to-display coordinate mapping for box overlays.
 *
 * The displayed frame is letterboxed into the viewport: uniform scale,
 * centered. Overlays must land within one display pixel of the true
 * position, so both directions of the mapping live here and are tested
 * as a round trip.
 */

export interface DisplayTransform {
  scale: number;
  offsetX: number;
  offsetY: number;
}

export interface Box {
  x0: number;
  y0: number;
  x1: number;
  y1: number;
}

export function fitTransform(
  imageWidth: number,
  imageHeight: number,
  viewWidth: number,
  viewHeight: number,
): DisplayTransform {
  if (imageWidth <= 0 || imageHeight <= 0 || viewWidth <= 0 || viewHeight <= 0) {
    throw new Error("fitTransform needs positive dimensions");
  }
  const scale = Math.min(viewWidth / imageWidth, viewHeight / imageHeight);
  return {
    scale,
    offsetX: (viewWidth - imageWidth * scale) / 2,
    offsetY: (viewHeight - imageHeight * scale) / 2,
  };
}

export function toDisplay(t: DisplayTransform, box: Box): Box {
  return {
    x0: box.x0 * t.scale + t.offsetX,
    y0: box.y0 * t.scale + t.offsetY,
    x1: box.x1 * t.scale + t.offsetX,
    y1: box.y1 * t.scale + t.offsetY,
  };
}

export function toImage(t: DisplayTransform, box: Box): Box {
  return {
    x0: (box.x0 - t.offsetX) / t.scale,
    y0: (box.y0 - t.offsetY) / t.scale,
    x1: (box.x1 - t.offsetX) / t.scale,
    y1: (box.y1 - t.offsetY) / t.scale,
  };
}

export function bboxToBox(bbox: [number, number, number, number]): Box {
  return { x0: bbox[0], y0: bbox[1], x1: bbox[2], y1: bbox[3] };
}

export function roundTripError(t: DisplayTransform, box: Box): number {
  const back = toDisplay(t, toImage(t, toDisplay(t, box)));
  const fwd = toDisplay(t, box);
  return Math.max(
    Math.abs(back.x0 - fwd.x0),
    Math.abs(back.y0 - fwd.y0),
    Math.abs(back.x1 - fwd.x1),
    Math.abs(back.y1 - fwd.y1),
  );
}
