/* Browser entry point. The service base URL is the page's only
 * configuration; it can be overridden with ?api=<url>.
 */

import { HttpApi } from './api.js';
import { App } from './app.js';

const params = new URLSearchParams(window.location.search);
const baseUrl = params.get('api') ?? 'http://127.0.0.1:8000';

const root = document.getElementById('app');
if (root === null) {
  throw new Error('missing #app container');
}
new App(root, new HttpApi(baseUrl));
