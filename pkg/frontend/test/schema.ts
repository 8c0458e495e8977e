/** Independent zod description of the socket protocol.
 *
 * The client has its own hand-rolled guards; tests validate real traffic
 * against these schemas instead so the two readings of the protocol
 * check each other.
 */

import { z } from "zod";

const point = z.tuple([z.number(), z.number()]);

export const cmdSchema = z.strictObject({
  type: z.literal("cmd"),
  v: z.number(),
  omega: z.number(),
  seq: z.number().int().min(1),
});

export const handoverSchema = z.strictObject({ type: z.literal("handover") });

export const clientSchema = z.discriminatedUnion("type", [cmdSchema, handoverSchema]);

export const metricsSchema = z.strictObject({
  t_total: z.number(),
  rho: z.number().min(0).max(1),
  d_clear: z.number(),
  decisions: z.number().int().min(0),
  triggers: z.number().int().min(0),
});

export const domainSchema = z.strictObject({
  apex: point,
  axis: point,
  h: z.number().positive(),
  r: z.number().min(0),
});

export const stateSchema = z.strictObject({
  type: z.literal("state"),
  tick: z.number().int().min(0),
  pose: z.tuple([z.number(), z.number(), z.number()]),
  path: z.array(point),
  domain: domainSchema.nullable(),
  goal: point,
  subgoals: z.array(point),
  metrics: metricsSchema,
});

export const mapSchema = z.strictObject({
  type: z.literal("map"),
  width_cells: z.number().int().positive(),
  height_cells: z.number().int().positive(),
  resolution: z.number().positive(),
  origin: point,
  cells: z.string(),
  start: point,
  goal: point,
  robot_radius: z.number().positive(),
});

export const endSchema = z.strictObject({
  type: z.literal("end"),
  success: z.boolean(),
  metrics: metricsSchema,
});

export const serverSchema = z.discriminatedUnion("type", [stateSchema, mapSchema, endSchema]);
